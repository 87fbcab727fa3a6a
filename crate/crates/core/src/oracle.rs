//! Slow, simple reference machinery for cross-checking the verifier.
//!
//! Nothing here shares code with [`crate::segmentation`] or
//! [`crate::invariance`] beyond the LP in [`crate::geometry`]: the region
//! enumerator rebuilds active parameters with plain scalar loops, and the
//! simulator only sees the network through exact forward evaluation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{GeometryError, HPolytope, Tolerances};
use crate::invariance::LinearSystem;
use crate::pwa_nn::{ActivationPattern, ActiveParams, AffineMap, EvalScratch, Network};
use crate::segmentation::LinearRegion;

/// Largest breakpoint-hyperplane count accepted by the brute-force
/// enumerator.
pub const ORACLE_MAX_HYPERPLANES: usize = 24;

/// States beyond this magnitude abort a simulation.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{found} breakpoint hyperplanes exceed the oracle limit of {limit}")]
    ScaleGuard { found: usize, limit: usize },
    #[error("state diverged at t = {time}")]
    NonFinite { time: f64 },
    #[error("invalid simulation settings: {0}")]
    InvalidSettings(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Rows of `weights · z + bias` as plain vectors.
fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Prefix state of the depth-first enumeration: `z = E x + G` for the
/// current layer input, in row-major scalar form.
#[derive(Clone)]
struct Prefix {
    e: Vec<Vec<f64>>,
    g: Vec<f64>,
    rows: Vec<(Vec<f64>, f64)>,
    pattern: Vec<Vec<usize>>,
    maps: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
}

struct Enumerator<'a> {
    net: &'a Network,
    tol: Tolerances,
    n: usize,
    found: Vec<LinearRegion>,
}

impl Enumerator<'_> {
    fn polytope(&self, rows: &[(Vec<f64>, f64)]) -> HPolytope {
        HPolytope::from_rows(self.n, rows).expect("rows have the input dimension")
    }

    fn nondegenerate(&self, rows: &[(Vec<f64>, f64)]) -> Result<bool, GeometryError> {
        match self.polytope(rows).chebyshev_center(self.tol.lp) {
            Ok((_, r)) => Ok(r >= self.tol.radius),
            Err(GeometryError::EmptyPolytope) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Chooses a segment for neuron `neuron` of layer `l`, then recurses.
    fn visit(
        &mut self,
        l: usize,
        neuron: usize,
        prefix: &Prefix,
        segs: &mut Vec<usize>,
        pre: &[(Vec<f64>, f64)],
    ) -> Result<(), GeometryError> {
        let layer = &self.net.layers()[l];
        if neuron == layer.n_out() {
            return self.finish_layer(l, prefix, segs, pre);
        }
        let (normal, constant) = &pre[neuron];
        let act = &layer.activation;
        let m = act.breakpoints();
        if normal.iter().all(|v| v.abs() < 1e-12) {
            // Constant preactivation: its segment follows the breakpoint
            // convention and adds no rows.
            let j = m.iter().filter(|&&mk| *constant > mk).count();
            segs.push(j);
            self.visit(l, neuron + 1, prefix, segs, pre)?;
            segs.pop();
            return Ok(());
        }
        for j in 0..act.n_segments() {
            let mut rows = prefix.rows.clone();
            // m_{j-1} ≤ normal·x + constant ≤ m_j
            if j > 0 {
                rows.push((normal.iter().map(|v| -v).collect(), constant - m[j - 1]));
            }
            if j < m.len() {
                rows.push((normal.clone(), m[j] - constant));
            }
            if !self.nondegenerate(&rows)? {
                continue;
            }
            let child = Prefix { rows, ..prefix.clone() };
            segs.push(j);
            self.visit(l, neuron + 1, &child, segs, pre)?;
            segs.pop();
        }
        Ok(())
    }

    fn finish_layer(&mut self, l: usize, prefix: &Prefix, segs: &[usize], pre: &[(Vec<f64>, f64)]) -> Result<(), GeometryError> {
        let layer = &self.net.layers()[l];
        let act = &layer.activation;
        let mut e = Vec::with_capacity(segs.len());
        let mut g = Vec::with_capacity(segs.len());
        for (i, &j) in segs.iter().enumerate() {
            let c = act.slopes()[j];
            let d = act.intercepts()[j];
            e.push(pre[i].0.iter().map(|v| c * v).collect::<Vec<f64>>());
            g.push(c * pre[i].1 + d);
        }
        let mut next = prefix.clone();
        next.pattern.push(segs.to_vec());
        next.maps.push((e.clone(), g.clone()));
        next.e = e;
        next.g = g;
        self.descend(l + 1, &next)
    }

    fn descend(&mut self, l: usize, prefix: &Prefix) -> Result<(), GeometryError> {
        if l == self.net.n_layers() {
            let poly = self.polytope(&prefix.rows);
            let (center, radius) = poly.chebyshev_center(self.tol.lp)?;
            let layers = prefix
                .maps
                .iter()
                .map(|(e, g)| AffineMap {
                    matrix: DMatrix::from_fn(e.len(), self.n, |i, k| e[i][k]),
                    offset: DVector::from_column_slice(g),
                })
                .collect();
            self.found.push(LinearRegion {
                id: self.found.len(),
                parent: None,
                depth: l,
                polytope: poly,
                pattern: ActivationPattern(prefix.pattern.clone()),
                params: ActiveParams { n_in: self.n, layers },
                center,
                radius,
            });
            return Ok(());
        }
        let layer = &self.net.layers()[l];
        let w = rows_of(&layer.weights);
        let b = layer.bias.as_slice();
        // Preactivation of every neuron as (normal, constant) in input space.
        let pre: Vec<(Vec<f64>, f64)> = (0..layer.n_out())
            .map(|i| {
                let mut normal = vec![0.0; self.n];
                let mut constant = b[i];
                for (k, wik) in w[i].iter().enumerate() {
                    for (c, nc) in normal.iter_mut().enumerate() {
                        *nc += wik * prefix.e[k][c];
                    }
                    constant += wik * prefix.g[k];
                }
                (normal, constant)
            })
            .collect();
        let mut segs = Vec::with_capacity(layer.n_out());
        self.visit(l, 0, prefix, &mut segs, &pre)
    }
}

/// Every full-depth activation pattern whose region inside `domain` has a
/// Chebyshev radius of at least `tol.radius`, with its polytope
/// (domain rows plus all delimiter rows) and parameters.
pub fn enumerate_regions_bruteforce(
    net: &Network,
    domain: &HPolytope,
    tol: &Tolerances,
) -> Result<Vec<LinearRegion>, OracleError> {
    let found = net.n_hyperplanes();
    if found > ORACLE_MAX_HYPERPLANES {
        return Err(OracleError::ScaleGuard {
            found,
            limit: ORACLE_MAX_HYPERPLANES,
        });
    }
    let n = net.n_in();
    if domain.dim() != n {
        return Err(OracleError::DimensionMismatch(format!(
            "domain has dimension {}, network expects {n}",
            domain.dim()
        )));
    }
    let rows = (0..domain.n_rows())
        .map(|i| (domain.row(i).iter().copied().collect(), domain.b()[i]))
        .collect();
    let root = Prefix {
        e: (0..n).map(|i| (0..n).map(|k| if i == k { 1.0 } else { 0.0 }).collect()).collect(),
        g: vec![0.0; n],
        rows,
        pattern: vec![],
        maps: vec![],
    };
    let mut en = Enumerator {
        net,
        tol: *tol,
        n,
        found: vec![],
    };
    if !en.nondegenerate(&root.rows)? {
        return Ok(vec![]);
    }
    en.descend(0, &root)?;
    Ok(en.found)
}

/// First boundary event of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub enum ExitEvent {
    /// Crossed row `face` of the safe set.
    LeftSafeSet { time: f64, face: usize, depth: f64 },
    /// Entered the interior of obstacle `obstacle`.
    EnteredObstacle { time: f64, obstacle: usize, depth: f64 },
}

impl ExitEvent {
    pub fn time(&self) -> f64 {
        match self {
            Self::LeftSafeSet { time, .. } | Self::EnteredObstacle { time, .. } => *time,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub exit_event: Option<ExitEvent>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectories hold the initial state")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    pub horizon: f64,
    pub step: f64,
    /// An event fires once the penetration depth exceeds this.
    pub event_tol: f64,
    /// Keep every `record_every`-th state; 0 keeps only the endpoints.
    pub record_every: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            step: 1e-3,
            event_tol: 0.0,
            record_every: 1,
        }
    }
}

/// Normalized halfspace rows for fast depth tests.
struct Rows {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Rows {
    fn new(p: &HPolytope) -> Self {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..p.n_rows() {
            let row = p.row(i);
            let norm = row.norm();
            if norm > 0.0 {
                a.push(row.iter().map(|v| v / norm).collect());
                b.push(p.b()[i] / norm);
            }
        }
        Self { a, b }
    }

    /// `max_i a_i·x - b_i` and the maximizing row.
    fn excess(&self, x: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            let v = a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - b;
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }
}

/// Closed-loop field `A x + B N(x)` on plain slices.
struct Field<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
    net: &'a Network,
    scratch: EvalScratch,
    u: Vec<f64>,
}

impl Field<'_> {
    fn eval(&mut self, x: &[f64], out: &mut [f64]) {
        self.net.eval_into(x, &mut self.scratch, &mut self.u);
        let n = x.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = 0.0;
            for (k, xk) in x.iter().enumerate() {
                v += self.a[(i, k)] * xk;
            }
            for (k, uk) in self.u.iter().enumerate() {
                v += self.b[(i, k)] * uk;
            }
            *o = v;
        }
        debug_assert_eq!(out.len(), n);
    }
}

struct Monitor {
    safe: Rows,
    obstacles: Vec<Rows>,
}

impl Monitor {
    fn new(safe: &HPolytope, obstacles: &[HPolytope]) -> Self {
        Self {
            safe: Rows::new(safe),
            obstacles: obstacles.iter().map(Rows::new).collect(),
        }
    }

    /// Deepest violation: outside the safe set, or inside an obstacle.
    fn depth(&self, x: &[f64]) -> (f64, Option<usize>, usize) {
        let (out, face) = self.safe.excess(x);
        let mut best = (out, None, face);
        for (k, o) in self.obstacles.iter().enumerate() {
            let inside = -o.excess(x).0;
            if inside > best.0 {
                best = (inside, Some(k), 0);
            }
        }
        best
    }
}

/// Fixed-step RK4 of `ẋ = A x + B N(x)` from `x0`, stopping at the first
/// event. The event time is interpolated linearly between the bracketing
/// steps.
pub fn simulate(
    sys: &LinearSystem,
    net: &Network,
    x0: &DVector<f64>,
    safe: &HPolytope,
    obstacles: &[HPolytope],
    options: &SimOptions,
) -> Result<Trajectory, OracleError> {
    // NaN fails both comparisons.
    let valid = options.step > 0.0 && options.horizon >= options.step;
    if !valid {
        return Err(OracleError::InvalidSettings(format!(
            "need step > 0 and horizon ≥ step, got step {} and horizon {}",
            options.step, options.horizon
        )));
    }
    let n = sys.a.nrows();
    if x0.len() != n || net.n_in() != n || sys.b.ncols() != net.n_out() {
        return Err(OracleError::DimensionMismatch(format!(
            "state {}, system {}×{}, network {}→{}",
            x0.len(),
            n,
            sys.b.ncols(),
            net.n_in(),
            net.n_out()
        )));
    }
    let mut field = Field {
        a: &sys.a,
        b: &sys.b,
        net,
        scratch: EvalScratch::default(),
        u: vec![0.0; net.n_out()],
    };
    let monitor = Monitor::new(safe, obstacles);
    let h = options.step;
    let steps = (options.horizon / h).round() as usize;

    let mut x: Vec<f64> = x0.iter().copied().collect();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut prev_depth = monitor.depth(&x).0;

    for s in 1..=steps {
        field.eval(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        field.eval(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        field.eval(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        field.eval(&tmp, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = s as f64 * h;
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return Err(OracleError::NonFinite { time: t });
        }
        let (depth, obstacle, face) = monitor.depth(&x);
        let last = s == steps;
        if depth > options.event_tol {
            let frac = if depth > prev_depth {
                ((options.event_tol - prev_depth) / (depth - prev_depth)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let time = t - h + frac * h;
            times.push(t);
            states.push(DVector::from_column_slice(&x));
            let exit_event = Some(match obstacle {
                Some(k) => ExitEvent::EnteredObstacle { time, obstacle: k, depth },
                None => ExitEvent::LeftSafeSet { time, face, depth },
            });
            return Ok(Trajectory { times, states, exit_event });
        }
        prev_depth = depth;
        if last || (options.record_every > 0 && s % options.record_every == 0) {
            times.push(t);
            states.push(DVector::from_column_slice(&x));
        }
    }
    Ok(Trajectory {
        times,
        states,
        exit_event: None,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct FalsifyOptions {
    pub samples: usize,
    pub horizon: f64,
    pub step: f64,
    /// Penetration depth that counts as an escape.
    pub escape_tol: f64,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for FalsifyOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            horizon: 10.0,
            step: 1e-3,
            escape_tol: 1e-4,
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }
}

/// Random point of a polytope given by its vertices.
fn convex_sample(rng: &mut ChaCha8Rng, vertices: &[DVector<f64>]) -> DVector<f64> {
    // Exponential weights give a uniform draw on the simplex of vertices.
    let w: Vec<f64> = vertices.iter().map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    let mut p = DVector::zeros(vertices[0].len());
    for (v, wk) in vertices.iter().zip(&w) {
        p += v * (wk / total);
    }
    p
}

/// Initial states for falsification: every face vertex of the safe set and
/// of each obstacle, every vertex of region ∩ face when the brute-force
/// enumerator applies, then `samples` random boundary points cycling over
/// the faces.
pub fn falsification_starts(
    net: &Network,
    safe: &HPolytope,
    obstacles: &[HPolytope],
    options: &FalsifyOptions,
) -> Result<Vec<DVector<f64>>, OracleError> {
    let tol = options.tolerances;
    let mut faces = Vec::new();
    for p in std::iter::once(safe).chain(obstacles) {
        for f in p.remove_redundant(tol.lp)?.faces() {
            let v = f.geometry.vertices(tol.face)?;
            if !v.is_empty() {
                faces.push((f.geometry, v.vertices));
            }
        }
    }
    let mut starts: Vec<DVector<f64>> = faces.iter().flat_map(|(_, v)| v.iter().cloned()).collect();
    if net.n_hyperplanes() <= ORACLE_MAX_HYPERPLANES {
        for region in enumerate_regions_bruteforce(net, safe, &tol)? {
            for (face, _) in &faces {
                let piece = region.polytope.intersect(face)?;
                if !piece.is_empty(tol.lp)? {
                    starts.extend(piece.vertices(tol.face)?.vertices);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    if !faces.is_empty() {
        for s in 0..options.samples {
            starts.push(convex_sample(&mut rng, &faces[s % faces.len()].1));
        }
    }
    Ok(starts)
}

/// Simulates from every start of [`falsification_starts`] and returns the
/// escaping trajectory with the lowest start index, if any.
pub fn falsify(
    sys: &LinearSystem,
    net: &Network,
    safe: &HPolytope,
    obstacles: &[HPolytope],
    options: &FalsifyOptions,
) -> Result<Option<Trajectory>, OracleError> {
    let starts = falsification_starts(net, safe, obstacles, options)?;
    let sim = SimOptions {
        horizon: options.horizon,
        step: options.step,
        event_tol: options.escape_tol,
        record_every: 0,
    };
    starts
        .par_iter()
        .map(|x0| simulate(sys, net, x0, safe, obstacles, &sim))
        .find_map_first(|res| match res {
            Ok(t) if t.exit_event.is_some() => Some(Ok(t)),
            Ok(_) => None,
            Err(e) => Some(Err(e)),
        })
        .transpose()
}
