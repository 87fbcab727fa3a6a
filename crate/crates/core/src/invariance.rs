//! Vertex-based invariance check of a polytopic safe set with polytopic
//! holes under a piecewise-affine closed loop.
//!
//! On every region `R_j` the closed loop is `ẋ = A_j x + b_j`. For a face
//! `F_i` of the safe set (or of an obstacle closure), the piece
//! `D_ij = F_i ∩ R_j` is a polytope on which `c_i·(A_j x + b_j)` is affine,
//! so its sign on `D_ij` is decided by the vertices. The safe set requires
//! the field to point inward (`≤ 0` along outward normals), obstacles require
//! it to point away (`≥ 0` along their outward normals).

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{Face, GeometryError, HPolytope, Tolerances};
use crate::pwa_nn::Network;
use crate::segmentation::{segment, LinearRegion, SegmentOptions, Segmentation, SegmentationError};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum InvarianceError {
    #[error("dimension mismatch: {0}")]
    InputDimensionMismatch(String),
    #[error("obstacle {0} is not contained in the safe set")]
    ObstacleOutsideSafeSet(usize),
    #[error("{kind} face {face_row}: point {point:?} lies in no region")]
    CoverageGap {
        kind: PieceKind,
        face_row: usize,
        point: Vec<f64>,
    },
    #[error("boundary piece of {kind} face {face_row} is unbounded")]
    UnboundedPiece { kind: PieceKind, face_row: usize },
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `ẋ = A x + B u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, InvarianceError> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(InvarianceError::InputDimensionMismatch(format!(
                "A is {}×{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(InvarianceError::InputDimensionMismatch(format!(
                "B has {} rows, A has {}",
                b.nrows(),
                a.nrows()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Same trajectories run backwards in time.
    pub fn negated(&self) -> Self {
        Self {
            a: -&self.a,
            b: -&self.b,
        }
    }
}

/// System, controller, safe set and obstacles of one verification task.
#[derive(Clone, Debug)]
pub struct SafetyProblem {
    pub system: LinearSystem,
    pub network: Network,
    pub safe: HPolytope,
    pub obstacles: Vec<HPolytope>,
}

impl SafetyProblem {
    pub fn verify(&self, options: &VerifyOptions) -> Result<Verdict, InvarianceError> {
        verify(&self.system, &self.network, &self.safe, &self.obstacles, options)
    }

    pub fn verify_detailed(&self, options: &VerifyOptions) -> Result<Verification, InvarianceError> {
        verify_detailed(&self.system, &self.network, &self.safe, &self.obstacles, options)
    }

    /// Same problem with the controller output negated.
    pub fn with_negated_controller(&self) -> Self {
        Self {
            network: self.network.negated_output(),
            ..self.clone()
        }
    }
}

/// Closed loop `ẋ = a x + b` on one region.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopPiece {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub region: usize,
}

impl ClosedLoopPiece {
    pub fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

/// `A_j = A + B E^(L)`, `b_j = B G^(L)` for a fully refined region.
pub fn closed_loop_piece(sys: &LinearSystem, region: &LinearRegion) -> Result<ClosedLoopPiece, InvarianceError> {
    let last = region.params.last();
    if last.matrix.nrows() != sys.n_inputs() || last.matrix.ncols() != sys.n_states() {
        return Err(InvarianceError::InputDimensionMismatch(format!(
            "region map is {}×{}, system needs {}×{}",
            last.matrix.nrows(),
            last.matrix.ncols(),
            sys.n_inputs(),
            sys.n_states()
        )));
    }
    Ok(ClosedLoopPiece {
        a: &sys.a + &sys.b * &last.matrix,
        b: &sys.b * &last.offset,
        region: region.id,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PieceKind {
    Outer,
    Obstacle(usize),
}

impl std::fmt::Display for PieceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Outer => write!(f, "safe-set"),
            Self::Obstacle(k) => write!(f, "obstacle {k}"),
        }
    }
}

/// Required sign of `normal · f(v)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarginSense {
    NonPositive,
    NonNegative,
}

impl PieceKind {
    pub fn sense(self) -> MarginSense {
        match self {
            Self::Outer => MarginSense::NonPositive,
            Self::Obstacle(_) => MarginSense::NonNegative,
        }
    }
}

/// `D_ij = F_i ∩ R_j`.
#[derive(Clone, Debug)]
pub struct BoundaryPiece {
    pub kind: PieceKind,
    pub face_row: usize,
    /// Position of the region in the list passed to [`boundary_pieces`].
    pub region_index: usize,
    pub region_id: usize,
    pub geometry: HPolytope,
    pub normal: DVector<f64>,
    pub sense: MarginSense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Satisfied,
    /// Satisfied only within the tolerance band around zero.
    Marginal,
    Violated,
}

/// Outcome at one vertex of one piece.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexCheck {
    pub piece: usize,
    pub kind: PieceKind,
    pub face_row: usize,
    pub region_id: usize,
    pub vertex: DVector<f64>,
    pub margin: f64,
    pub status: CheckStatus,
}

/// Classifies `margin` against the required sense.
pub fn classify(margin: f64, sense: MarginSense, tol_margin: f64) -> CheckStatus {
    let signed = match sense {
        MarginSense::NonPositive => margin,
        MarginSense::NonNegative => -margin,
    };
    if signed > tol_margin {
        CheckStatus::Violated
    } else if signed >= -tol_margin {
        CheckStatus::Marginal
    } else {
        CheckStatus::Satisfied
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PieceOptions {
    pub tolerances: Tolerances,
    /// Monte-Carlo probes per face for the coverage test; 0 disables it.
    pub probes: usize,
    pub seed: u64,
}

impl Default for PieceOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            probes: 64,
            seed: 0,
        }
    }
}

/// Faces of the safe set, then of each obstacle closure, in row order.
fn boundary_faces(
    safe: &HPolytope,
    obstacles: &[HPolytope],
    tol: &Tolerances,
) -> Result<Vec<(PieceKind, Face)>, GeometryError> {
    // Face rows keep the caller's numbering.
    let faces_of = |p: &HPolytope| -> Result<Vec<Face>, GeometryError> {
        let rows = p.irredundant_rows(tol.lp)?;
        let mut faces = p.select_rows(&rows).with_open(false).faces();
        for f in &mut faces {
            f.row_index = rows[f.row_index];
        }
        Ok(faces)
    };
    let mut out: Vec<(PieceKind, Face)> = faces_of(safe)?.into_iter().map(|f| (PieceKind::Outer, f)).collect();
    for (k, o) in obstacles.iter().enumerate() {
        out.extend(faces_of(o)?.into_iter().map(|f| (PieceKind::Obstacle(k), f)));
    }
    Ok(out)
}

fn coverage_probe(
    kind: PieceKind,
    face: &Face,
    regions: &[LinearRegion],
    options: &PieceOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(), InvarianceError> {
    let tol = options.tolerances;
    let corners = face.geometry.vertices(tol.face).map_err(|e| match e {
        GeometryError::UnboundedPolytope => InvarianceError::UnboundedPiece {
            kind,
            face_row: face.row_index,
        },
        e => e.into(),
    })?;
    if corners.is_empty() {
        return Ok(());
    }
    let n = corners.vertices[0].len();
    for _ in 0..options.probes {
        let w: Vec<f64> = corners.iter().map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        let mut p = DVector::zeros(n);
        for (v, wk) in corners.iter().zip(&w) {
            p += v * (wk / total);
        }
        if !regions.iter().any(|r| r.polytope.contains(&p, tol.face)) {
            return Err(InvarianceError::CoverageGap {
                kind,
                face_row: face.row_index,
                point: p.iter().copied().collect(),
            });
        }
    }
    Ok(())
}

fn make_piece(
    kind: PieceKind,
    face: &Face,
    region_index: usize,
    region: &LinearRegion,
    tol: &Tolerances,
) -> Result<Option<BoundaryPiece>, GeometryError> {
    let geometry = region.polytope.intersect(&face.geometry)?;
    if geometry.is_empty(tol.lp)? {
        return Ok(None);
    }
    Ok(Some(BoundaryPiece {
        kind,
        face_row: face.row_index,
        region_index,
        region_id: region.id,
        geometry,
        normal: face.normal.clone(),
        sense: kind.sense(),
    }))
}

/// Every nonempty `F_i ∩ R_j`: outer faces first, then obstacle faces;
/// regions in list order within a face.
pub fn boundary_pieces(
    safe: &HPolytope,
    obstacles: &[HPolytope],
    regions: &[LinearRegion],
    options: &PieceOptions,
) -> Result<Vec<BoundaryPiece>, InvarianceError> {
    let tol = options.tolerances;
    let faces = boundary_faces(safe, obstacles, &tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for (kind, face) in &faces {
        coverage_probe(*kind, face, regions, options, &mut rng)?;
    }
    let pairs: Vec<(usize, usize)> = (0..faces.len())
        .flat_map(|f| (0..regions.len()).map(move |r| (f, r)))
        .collect();
    let pieces: Vec<Option<BoundaryPiece>> = pairs
        .par_iter()
        .map(|&(f, r)| make_piece(faces[f].0, &faces[f].1, r, &regions[r], &tol))
        .collect::<Result<_, _>>()?;
    Ok(pieces.into_iter().flatten().collect())
}

/// `(v, normal · (A_j v + b_j))` for every vertex of the piece.
pub fn check_piece(
    piece: &BoundaryPiece,
    dynamics: &ClosedLoopPiece,
    tol: &Tolerances,
) -> Result<Vec<(DVector<f64>, f64)>, InvarianceError> {
    debug_assert_eq!(piece.region_id, dynamics.region);
    let vertices = piece.geometry.vertices(tol.face).map_err(|e| match e {
        GeometryError::UnboundedPolytope => InvarianceError::UnboundedPiece {
            kind: piece.kind,
            face_row: piece.face_row,
        },
        e => e.into(),
    })?;
    Ok(vertices
        .vertices
        .into_iter()
        .map(|v| {
            let margin = piece.normal.dot(&dynamics.field(&v));
            (v, margin)
        })
        .collect())
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub prune: bool,
    pub early_exit: bool,
    pub tolerances: Tolerances,
    pub seed: u64,
    /// Coverage probes per face.
    pub probes: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            prune: true,
            early_exit: false,
            tolerances: Tolerances::default(),
            seed: 0,
            probes: 64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerdictStats {
    pub regions: usize,
    pub pieces: usize,
    pub vertices: usize,
    pub marginal: usize,
    pub violations: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timings {
    pub segmentation: Duration,
    pub pieces: Duration,
    pub checks: Duration,
    pub total: Duration,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub safe: bool,
    pub violations: Vec<VertexCheck>,
    /// Every vertex check performed, in piece order.
    pub checks: Vec<VertexCheck>,
    pub stats: VerdictStats,
    pub timings: Timings,
}

/// Verdict together with the intermediate products.
#[derive(Clone, Debug)]
pub struct Verification {
    pub verdict: Verdict,
    pub segmentation: Segmentation,
    pub pieces: Vec<BoundaryPiece>,
}

fn check_dimensions(
    sys: &LinearSystem,
    net: &Network,
    safe: &HPolytope,
    obstacles: &[HPolytope],
) -> Result<(), InvarianceError> {
    let n = sys.n_states();
    let mismatch = |what: String| Err(InvarianceError::InputDimensionMismatch(what));
    if net.n_in() != n {
        return mismatch(format!("network takes {} inputs, system has {n} states", net.n_in()));
    }
    if net.n_out() != sys.n_inputs() {
        return mismatch(format!(
            "network has {} outputs, system has {} inputs",
            net.n_out(),
            sys.n_inputs()
        ));
    }
    if safe.dim() != n {
        return mismatch(format!("safe set has dimension {}, system has {n} states", safe.dim()));
    }
    if let Some(k) = obstacles.iter().position(|o| o.dim() != n) {
        return mismatch(format!("obstacle {k} has dimension {}", obstacles[k].dim()));
    }
    Ok(())
}

/// Checks positive invariance of `safe \ ∪ obstacles` for
/// `ẋ = A x + B N(x)`.
pub fn verify(
    sys: &LinearSystem,
    net: &Network,
    safe: &HPolytope,
    obstacles: &[HPolytope],
    options: &VerifyOptions,
) -> Result<Verdict, InvarianceError> {
    Ok(verify_detailed(sys, net, safe, obstacles, options)?.verdict)
}

pub fn verify_detailed(
    sys: &LinearSystem,
    net: &Network,
    safe: &HPolytope,
    obstacles: &[HPolytope],
    options: &VerifyOptions,
) -> Result<Verification, InvarianceError> {
    let start = Instant::now();
    let tol = options.tolerances;
    check_dimensions(sys, net, safe, obstacles)?;
    for (k, o) in obstacles.iter().enumerate() {
        if !safe.contains_polytope(o, tol.face)? {
            return Err(InvarianceError::ObstacleOutsideSafeSet(k));
        }
    }

    let seg = segment(
        net,
        safe,
        obstacles,
        &SegmentOptions {
            prune: options.prune,
            tolerances: tol,
        },
    )?;
    let t_seg = start.elapsed();

    let dynamics: Vec<ClosedLoopPiece> = seg
        .regions
        .iter()
        .map(|r| closed_loop_piece(sys, r))
        .collect::<Result<_, _>>()?;

    let piece_start = Instant::now();
    let piece_opts = PieceOptions {
        tolerances: tol,
        probes: options.probes,
        seed: options.seed,
    };
    let pieces = boundary_pieces(safe, obstacles, &seg.regions, &piece_opts)?;
    let t_pieces = piece_start.elapsed();

    let check_start = Instant::now();
    let run = |(index, piece): (usize, &BoundaryPiece)| -> Result<Vec<VertexCheck>, InvarianceError> {
        let margins = check_piece(piece, &dynamics[piece.region_index], &tol)?;
        Ok(margins
            .into_iter()
            .map(|(vertex, margin)| VertexCheck {
                piece: index,
                kind: piece.kind,
                face_row: piece.face_row,
                region_id: piece.region_id,
                vertex,
                margin,
                status: classify(margin, piece.sense, tol.margin),
            })
            .collect())
    };
    let checks: Vec<VertexCheck> = if options.early_exit {
        let mut out = Vec::new();
        for item in pieces.iter().enumerate() {
            let batch = run(item)?;
            let stop = batch.iter().any(|c| c.status == CheckStatus::Violated);
            out.extend(batch);
            if stop {
                break;
            }
        }
        out
    } else {
        let batches: Vec<Vec<VertexCheck>> = pieces.par_iter().enumerate().map(run).collect::<Result<_, _>>()?;
        batches.into_iter().flatten().collect()
    };
    let t_checks = check_start.elapsed();

    let violations: Vec<VertexCheck> = checks
        .iter()
        .filter(|c| c.status == CheckStatus::Violated)
        .cloned()
        .collect();
    let stats = VerdictStats {
        regions: seg.regions.len(),
        pieces: pieces.len(),
        vertices: checks.len(),
        marginal: checks.iter().filter(|c| c.status == CheckStatus::Marginal).count(),
        violations: violations.len(),
    };
    let verdict = Verdict {
        safe: violations.is_empty(),
        violations,
        checks,
        stats,
        timings: Timings {
            segmentation: t_seg,
            pieces: t_pieces,
            checks: t_checks,
            total: start.elapsed(),
        },
    };
    Ok(Verification {
        verdict,
        segmentation: seg,
        pieces,
    })
}
