//! Layer-by-layer decomposition of a polytopic domain into the linear
//! regions of a network.
//!
//! Every region of layer `l` is cut by the breakpoint hyperplanes of layer
//! `l + 1` expressed in input coordinates; the surviving cells inherit the
//! parent pattern extended by their side of each cut. All regions of a layer
//! are finished before the next layer starts, and sibling splits run in
//! parallel.
//!
//! With pruning enabled a cell that touches neither a face of the domain nor
//! an obstacle closure is frozen as soon as it appears: none of its
//! descendants can touch them either.

mod partition;
mod split;

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::geometry::{solve_lp, GeometryError, HPolytope, LpStatus, Sense, Tolerances, VPolytope};
use crate::pwa_nn::{ActivationPattern, ActiveParams, Network, NetworkError};

pub use partition::{verify_partition, PartitionOptions, PartitionReport};
pub use split::{region_hyperplanes, split_region, RegionHyperplane};
use split::{split_region_traced, TracedChild};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("domain is empty or has no interior")]
    EmptyDomain,
    #[error("domain is unbounded")]
    UnboundedDomain,
    #[error("domain has dimension {found}, network expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("obstacle {index} has dimension {found}, expected {expected}")]
    ObstacleDimension { index: usize, expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A cell on which the first `depth` layers are jointly affine.
#[derive(Clone, Debug)]
pub struct LinearRegion {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub polytope: HPolytope,
    pub pattern: ActivationPattern,
    pub params: ActiveParams,
    /// Chebyshev center and radius of `polytope`.
    pub center: DVector<f64>,
    pub radius: f64,
}

impl LinearRegion {
    /// Root cell: the whole domain with identity parameters.
    pub fn root(net: &Network, domain: HPolytope, tol: &Tolerances) -> Result<Self, SegmentationError> {
        if domain.dim() != net.n_in() {
            return Err(SegmentationError::DimensionMismatch {
                expected: net.n_in(),
                found: domain.dim(),
            });
        }
        let (center, radius) = match domain.chebyshev_center(tol.lp) {
            Ok(c) => c,
            Err(GeometryError::EmptyPolytope) => return Err(SegmentationError::EmptyDomain),
            Err(GeometryError::UnboundedPolytope) => return Err(SegmentationError::UnboundedDomain),
            Err(e) => return Err(e.into()),
        };
        if radius < tol.radius {
            return Err(SegmentationError::EmptyDomain);
        }
        Ok(Self {
            id: 0,
            parent: None,
            depth: 0,
            polytope: domain,
            pattern: ActivationPattern::default(),
            params: ActiveParams {
                n_in: net.n_in(),
                layers: vec![],
            },
            center,
            radius,
        })
    }

    /// Affine map of the deepest refined layer evaluated at `x`.
    pub fn affine_output(&self, x: &DVector<f64>) -> DVector<f64> {
        self.params.last().apply(x)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SegmentOptions {
    pub prune: bool,
    pub tolerances: Tolerances,
}

/// Node of the refinement tree. Parameters are kept only on returned
/// leaves; nodes carry geometry and pattern.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    pub pattern: ActivationPattern,
    pub polytope: HPolytope,
    /// Set when pruning stopped refinement at this node.
    pub frozen: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RegionTree {
    nodes: Vec<TreeNode>,
}

impl RegionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes refined through exactly `depth` layers.
    pub fn leaves_at(&self, depth: usize) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.depth == depth)
    }

    pub fn frozen(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.frozen)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SegmentStats {
    /// Live cells after each layer (frozen cells excluded).
    pub cells_per_layer: Vec<usize>,
    pub frozen: usize,
    pub degenerate_hyperplanes: usize,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub regions: Vec<LinearRegion>,
    pub tree: RegionTree,
    pub stats: SegmentStats,
}

/// Domain faces and obstacles a region meets, by index.
#[derive(Clone, Debug, Default)]
struct Contacts {
    faces: Vec<usize>,
    obstacles: Vec<usize>,
}

impl Contacts {
    fn is_empty(&self) -> bool {
        self.faces.is_empty() && self.obstacles.is_empty()
    }
}

/// Boundary sets consulted by pruning.
struct BoundaryProbe<'a> {
    domain: &'a HPolytope,
    obstacles: &'a [HPolytope],
    /// Vertices of each bounded obstacle.
    corners: Vec<Option<VPolytope>>,
    tol: f64,
}

impl<'a> BoundaryProbe<'a> {
    fn new(domain: &'a HPolytope, obstacles: &'a [HPolytope], tol: f64) -> Self {
        let corners = obstacles.iter().map(|o| o.vertices(tol).ok()).collect();
        Self {
            domain,
            obstacles,
            corners,
            tol,
        }
    }

    fn everything(&self) -> Contacts {
        Contacts {
            faces: (0..self.domain.n_rows()).collect(),
            obstacles: (0..self.obstacles.len()).collect(),
        }
    }

    /// The members of `candidates` that `region` meets. Stops at the first
    /// one unless `exhaustive`. `region ⊆ domain`, so meeting face `i` means
    /// `max a_i·x` over the region reaches `b_i`.
    fn contacts(
        &self,
        region: &HPolytope,
        trace: Option<&TracedChild>,
        candidates: &Contacts,
        exhaustive: bool,
    ) -> Result<Contacts, GeometryError> {
        let mut out = Contacts::default();
        for &i in &candidates.faces {
            let touched = match trace.and_then(|t| self.face_from_trace(i, t)) {
                Some(t) => t,
                None => {
                    let normal = self.domain.row(i).transpose();
                    let res = solve_lp(&normal, region, Sense::Maximize)?;
                    res.status == LpStatus::Optimal
                        && res.objective >= self.domain.b()[i] - self.tol * normal.norm()
                }
            };
            if touched {
                out.faces.push(i);
                if !exhaustive {
                    return Ok(out);
                }
            }
        }
        for &k in &candidates.obstacles {
            if self.separated(region, k) {
                continue;
            }
            if !region.intersect(&self.obstacles[k])?.is_empty(self.tol)? {
                out.obstacles.push(k);
                if !exhaustive {
                    return Ok(out);
                }
            }
        }
        Ok(out)
    }

    /// Some row of `region` has all vertices of obstacle `k` strictly
    /// outside, beyond `tol`.
    fn separated(&self, region: &HPolytope, k: usize) -> bool {
        let Some(corners) = &self.corners[k] else {
            return false;
        };
        (0..region.n_rows()).any(|r| {
            let a = region.a().row(r);
            let bound = region.b()[r] + self.tol * a.norm();
            corners.vertices.iter().all(|v| a.dot(&v.transpose()) > bound)
        })
    }

    /// Settles face `i` from the redundancy pass when the child still carries
    /// the domain row: domain rows pass through splits verbatim, a kept row
    /// supports the child, and a dropped row comes with its maximum.
    fn face_from_trace(&self, i: usize, t: &TracedChild) -> Option<bool> {
        let (a, b) = (self.domain.row(i), self.domain.b()[i]);
        let same = |p: &HPolytope, r: usize| p.b()[r] == b && p.a().row(r) == a;
        let kept = &t.region.polytope;
        if (0..kept.n_rows()).any(|r| same(kept, r)) {
            return Some(true);
        }
        t.dropped
            .iter()
            .find(|&&(r, _)| same(&t.raw, r))
            .map(|&(_, max)| max >= b - self.tol * a.norm())
    }
}

/// Whether `region` meets a face of `domain` or an obstacle closure, within
/// `tol` (Euclidean). `region` must lie inside `domain`.
pub fn touches_boundary(
    region: &HPolytope,
    domain: &HPolytope,
    obstacles: &[HPolytope],
    tol: f64,
) -> Result<bool, GeometryError> {
    let probe = BoundaryProbe::new(domain, obstacles, tol);
    Ok(!probe.contacts(region, None, &probe.everything(), false)?.is_empty())
}

/// Decomposes `domain` into the linear regions of `net`.
///
/// Without pruning the returned regions partition `domain`. With pruning
/// only regions touching `∂domain` or an obstacle closure are returned.
pub fn segment(
    net: &Network,
    domain: &HPolytope,
    obstacles: &[HPolytope],
    options: &SegmentOptions,
) -> Result<Segmentation, SegmentationError> {
    let start = Instant::now();
    let tol = options.tolerances;
    let n = net.n_in();
    for (index, o) in obstacles.iter().enumerate() {
        if o.dim() != n {
            return Err(SegmentationError::ObstacleDimension {
                index,
                expected: n,
                found: o.dim(),
            });
        }
    }
    let domain = domain.remove_redundant(tol.lp)?;
    let root = LinearRegion::root(net, domain.clone(), &tol)?;
    let probe = BoundaryProbe::new(&domain, obstacles, tol.face);

    let mut tree = RegionTree::default();
    tree.nodes.push(TreeNode {
        id: 0,
        parent: None,
        children: vec![],
        depth: 0,
        pattern: root.pattern.clone(),
        polytope: root.polytope.clone(),
        frozen: false,
    });
    let mut stats = SegmentStats::default();
    // A child can only meet what its parent meets.
    let mut frontier = vec![(root, probe.everything())];

    for l in 0..net.n_layers() {
        let layer = &net.layers()[l];
        // Contacts only matter to descendants that can still be cut.
        let exhaustive = net.layers()[l + 1..].iter().any(|later| later.n_hyperplanes() > 0);
        type Tagged = (LinearRegion, Option<Contacts>);
        let results: Vec<Result<(Vec<Tagged>, usize), SegmentationError>> = frontier
            .par_iter()
            .map(|(region, met)| {
                let hyperplanes = region_hyperplanes(layer, region);
                let degenerate = hyperplanes.iter().filter(|h| h.degenerate).count();
                let children = split_region_traced(net, region, &hyperplanes, &tol)?;
                let mut tagged = Vec::with_capacity(children.len());
                for child in children {
                    let contacts = if child.uncut {
                        Some(met.clone())
                    } else if options.prune {
                        let c = probe.contacts(&child.region.polytope, Some(&child), met, exhaustive)?;
                        (!c.is_empty()).then_some(c)
                    } else {
                        Some(Contacts::default())
                    };
                    tagged.push((child.region, contacts));
                }
                Ok((tagged, degenerate))
            })
            .collect();

        let mut next = Vec::new();
        for result in results {
            let (children, degenerate) = result?;
            stats.degenerate_hyperplanes += degenerate;
            for (mut child, contacts) in children {
                let live = contacts.is_some();
                let id = tree.nodes.len();
                let parent = child.parent.expect("children carry their parent");
                child.id = id;
                tree.nodes[parent].children.push(id);
                tree.nodes.push(TreeNode {
                    id,
                    parent: Some(parent),
                    children: vec![],
                    depth: child.depth,
                    pattern: child.pattern.clone(),
                    polytope: child.polytope.clone(),
                    frozen: !live,
                });
                if let Some(c) = contacts {
                    next.push((child, c));
                } else {
                    stats.frozen += 1;
                }
            }
        }
        stats.cells_per_layer.push(next.len());
        frontier = next;
    }
    stats.elapsed = start.elapsed();
    Ok(Segmentation {
        regions: frontier.into_iter().map(|(r, _)| r).collect(),
        tree,
        stats,
    })
}
