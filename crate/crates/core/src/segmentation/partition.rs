//! Audit of a segmentation: coverage, overlaps and continuity across
//! shared boundaries.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LinearRegion;
use crate::geometry::{GeometryError, HPolytope, Tolerances};

#[derive(Clone, Copy, Debug)]
pub struct PartitionOptions {
    /// Monte-Carlo samples drawn uniformly from the domain.
    pub samples: usize,
    /// Points sampled on each pairwise intersection for continuity.
    pub facet_points: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            facet_points: 20,
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartitionReport {
    pub samples: usize,
    /// Samples inside the domain but in no region (within `tol.face`).
    pub uncovered: usize,
    /// Samples strictly inside more than one region.
    pub multiply_covered: usize,
    /// Region pairs whose intersection has interior.
    pub overlapping_pairs: Vec<(usize, usize)>,
    pub max_overlap_radius: f64,
    /// Region pairs with a nonempty common boundary.
    pub adjacent_pairs: usize,
    /// Largest sup-norm gap between neighbouring affine maps on their common
    /// boundary.
    pub continuity_defect: f64,
}

impl PartitionReport {
    pub fn is_partition(&self, tol: &Tolerances) -> bool {
        self.uncovered == 0 && self.multiply_covered == 0 && self.max_overlap_radius < tol.radius
    }
}

fn overlaps(a: &(DVector<f64>, DVector<f64>), b: &(DVector<f64>, DVector<f64>), slack: f64) -> bool {
    (0..a.0.len()).all(|k| a.0[k] <= b.1[k] + slack && b.0[k] <= a.1[k] + slack)
}

/// Monte-Carlo and LP audit of `regions` against `domain`.
pub fn verify_partition(
    regions: &[LinearRegion],
    domain: &HPolytope,
    options: &PartitionOptions,
) -> Result<PartitionReport, GeometryError> {
    let tol = options.tolerances;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut report = PartitionReport::default();

    let (lo, hi) = domain.bounding_box()?;
    let n = domain.dim();
    let mut drawn = 0;
    while report.samples < options.samples && drawn < options.samples * 1000 {
        drawn += 1;
        let x = DVector::from_fn(n, |k, _| rng.random_range(lo[k]..=hi[k]));
        if !domain.contains(&x, 0.0) {
            continue;
        }
        report.samples += 1;
        if !regions.iter().any(|r| r.polytope.contains(&x, tol.face)) {
            report.uncovered += 1;
        }
        let strict = regions
            .iter()
            .filter(|r| r.polytope.contains_interior(&x, tol.face))
            .count();
        if strict > 1 {
            report.multiply_covered += 1;
        }
    }

    let vertices: Vec<Vec<DVector<f64>>> = regions
        .iter()
        .map(|r| r.polytope.vertices(tol.face).map(|v| v.vertices))
        .collect::<Result<_, _>>()?;
    let boxes: Vec<(DVector<f64>, DVector<f64>)> = vertices
        .iter()
        .map(|vs| {
            let mut lo = DVector::from_element(n, f64::INFINITY);
            let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
            for v in vs {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
            (lo, hi)
        })
        .collect();

    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            if !overlaps(&boxes[i], &boxes[j], tol.face) {
                continue;
            }
            let common = regions[i].polytope.intersect(&regions[j].polytope)?;
            if common.is_empty(tol.lp)? {
                continue;
            }
            if let Ok((_, r)) = common.chebyshev_center(tol.lp) {
                report.max_overlap_radius = report.max_overlap_radius.max(r);
                if r >= tol.radius {
                    report.overlapping_pairs.push((i, j));
                }
            }
            let corners = common.vertices(tol.face)?;
            if corners.is_empty() {
                continue;
            }
            report.adjacent_pairs += 1;
            let mut probes: Vec<DVector<f64>> = corners.vertices.clone();
            for _ in 0..options.facet_points {
                let w: Vec<f64> = (0..corners.len()).map(|_| rng.random::<f64>()).collect();
                let total: f64 = w.iter().sum();
                let mut p = DVector::zeros(n);
                for (v, wk) in corners.iter().zip(&w) {
                    p += v * (wk / total);
                }
                probes.push(p);
            }
            for p in &probes {
                let gap = (regions[i].affine_output(p) - regions[j].affine_output(p)).amax();
                report.continuity_defect = report.continuity_defect.max(gap);
            }
        }
    }
    Ok(report)
}
