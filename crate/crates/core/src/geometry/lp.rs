//! Linear programs over H-polytopes.
//!
//! Problems have the form `min cᵀx s.t. Cx ≤ d` with `x` free. They are
//! solved through their dual `min dᵀy s.t. Cᵀy = -c, y ≥ 0`, which has only
//! `n` equality rows. Every LP issued by the verifier lives in dimension at
//! most `n_in + 1` with many rows, so the dual tableau stays tiny
//! (`n × (m + n)`) and pivots are cheap.
//!
//! The primal optimizer is recovered from the simplex multipliers of the
//! final dual basis and then polished by solving the active square system.

use nalgebra::{DMatrix, DVector};

use super::{GeometryError, HPolytope};

/// Optimization sense of [`solve_lp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Outcome of an LP. `point` is set iff `status` is optimal.
#[derive(Clone, Debug)]
pub struct LpResult {
    pub status: LpStatus,
    pub point: Option<DVector<f64>>,
    pub objective: f64,
}

impl LpResult {
    fn infeasible() -> Self {
        Self {
            status: LpStatus::Infeasible,
            point: None,
            objective: f64::NAN,
        }
    }

    fn unbounded(sense: Sense) -> Self {
        Self {
            status: LpStatus::Unbounded,
            point: None,
            objective: match sense {
                Sense::Minimize => f64::NEG_INFINITY,
                Sense::Maximize => f64::INFINITY,
            },
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;
// Dantzig pricing switches to Bland's rule after this many degenerate pivots
// in a row.
const DEGENERATE_STREAK: usize = 50;

/// Optimize `objective · x` over `p`.
pub fn solve_lp(
    objective: &DVector<f64>,
    p: &HPolytope,
    sense: Sense,
) -> Result<LpResult, GeometryError> {
    if objective.len() != p.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: p.dim(),
            found: objective.len(),
        });
    }
    let c: Vec<f64> = match sense {
        Sense::Minimize => objective.iter().copied().collect(),
        Sense::Maximize => objective.iter().map(|v| -v).collect(),
    };
    let rows = normalized_rows(p);
    let rows = match rows {
        Some(rows) => rows,
        None => return Ok(LpResult::infeasible()),
    };
    let n = p.dim();
    match solve_inequality_form(&c, &rows, n)? {
        Raw::Optimal(x) => {
            let value = objective.dot(&x);
            Ok(LpResult {
                status: LpStatus::Optimal,
                point: Some(x),
                objective: value,
            })
        }
        Raw::Infeasible => Ok(LpResult::infeasible()),
        Raw::DualInfeasible => {
            // Primal is unbounded or infeasible; settle with a pure
            // feasibility solve.
            let zero = vec![0.0; n];
            match solve_inequality_form(&zero, &rows, n)? {
                Raw::Optimal(_) => Ok(LpResult::unbounded(sense)),
                _ => Ok(LpResult::infeasible()),
            }
        }
    }
}

/// Feasibility point of `Cx ≤ d + tol·‖C_i‖`, if any.
pub(crate) fn feasible_point(p: &HPolytope, tol: f64) -> Result<Option<DVector<f64>>, GeometryError> {
    let rows = match normalized_rows(p) {
        Some(rows) => rows,
        None => return Ok(None),
    };
    let relaxed: Vec<(Vec<f64>, f64)> = rows.into_iter().map(|(a, b)| (a, b + tol)).collect();
    let zero = vec![0.0; p.dim()];
    match solve_inequality_form(&zero, &relaxed, p.dim())? {
        Raw::Optimal(x) => Ok(Some(x)),
        _ => Ok(None),
    }
}

/// Unit-norm rows; zero rows are dropped when satisfied and make the whole
/// problem infeasible (`None`) otherwise.
fn normalized_rows(p: &HPolytope) -> Option<Vec<(Vec<f64>, f64)>> {
    let mut rows = Vec::with_capacity(p.n_rows());
    for i in 0..p.n_rows() {
        let row = p.a().row(i);
        let norm = row.norm();
        let rhs = p.b()[i];
        if norm < 1e-300 {
            if rhs < -1e-12 {
                return None;
            }
            continue;
        }
        rows.push((row.iter().map(|v| v / norm).collect(), rhs / norm));
    }
    Some(rows)
}

enum Raw {
    Optimal(DVector<f64>),
    Infeasible,
    DualInfeasible,
}

/// Dense simplex tableau for `min costᵀz s.t. T z = rhs, z ≥ 0`.
struct Tableau {
    rows: usize,
    cols: usize,
    // Row-major, `cols + 1` entries per row; the last entry is the rhs.
    t: Vec<f64>,
    basis: Vec<usize>,
    // Reduced costs, last entry is -objective.
    reduced: Vec<f64>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.cols + 1) + self.cols]
    }

    fn price(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        self.reduced.clear();
        self.reduced.extend_from_slice(cost);
        self.reduced.push(0.0);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for c in 0..w {
                self.reduced[c] -= cb * self.t[r * w + c];
            }
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let inv = 1.0 / self.at(pr, pc);
        for c in 0..w {
            self.t[pr * w + c] *= inv;
        }
        self.t[pr * w + pc] = 1.0;
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f == 0.0 {
                continue;
            }
            for c in 0..w {
                self.t[r * w + c] -= f * self.t[pr * w + c];
            }
            self.t[r * w + pc] = 0.0;
        }
        let f = self.reduced[pc];
        if f != 0.0 {
            for c in 0..w {
                self.reduced[c] -= f * self.t[pr * w + c];
            }
            self.reduced[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Runs simplex iterations on columns `0..allowed`. Returns `false` when
    /// the objective is unbounded below.
    fn optimize(&mut self, allowed: usize) -> Result<bool, GeometryError> {
        let mut streak = 0usize;
        for _ in 0..MAX_PIVOTS {
            let bland = streak >= DEGENERATE_STREAK;
            let mut enter = None;
            let mut best = -COST_EPS;
            for c in 0..allowed {
                let rc = self.reduced[c];
                if rc < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(pc) = enter else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-14
                            || (ratio <= lratio + 1e-14 && self.basis[r] < self.basis[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
            let Some((pr, ratio)) = leave else {
                return Ok(false);
            };
            if ratio <= 1e-14 {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(pr, pc);
        }
        Err(GeometryError::LpIterationLimit)
    }
}

fn solve_inequality_form(c: &[f64], rows: &[(Vec<f64>, f64)], n: usize) -> Result<Raw, GeometryError> {
    let m = rows.len();
    if m == 0 {
        // No constraints: bounded only for the zero objective.
        return Ok(if c.iter().all(|v| v.abs() <= COST_EPS) {
            Raw::Optimal(DVector::zeros(n))
        } else {
            Raw::DualInfeasible
        });
    }
    let cols = m + n;
    let w = cols + 1;
    let mut signs = vec![1.0; n];
    let mut t = vec![0.0; n * w];
    for j in 0..n {
        let rhs = -c[j];
        let s = if rhs < 0.0 { -1.0 } else { 1.0 };
        signs[j] = s;
        for (i, (a, _)) in rows.iter().enumerate() {
            t[j * w + i] = s * a[j];
        }
        t[j * w + m + j] = 1.0;
        t[j * w + cols] = s * rhs;
    }
    let mut tab = Tableau {
        rows: n,
        cols,
        t,
        basis: (m..m + n).collect(),
        reduced: Vec::with_capacity(w),
    };

    // Phase 1: drive the artificials to zero.
    let mut cost1 = vec![0.0; cols];
    for v in cost1.iter_mut().skip(m) {
        *v = 1.0;
    }
    tab.price(&cost1);
    tab.optimize(cols)?;
    let infeas: f64 = (0..n)
        .filter(|&r| tab.basis[r] >= m)
        .map(|r| tab.rhs(r).max(0.0))
        .sum();
    let scale = 1.0 + c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if infeas > 1e-9 * scale {
        return Ok(Raw::DualInfeasible);
    }
    // Pivot remaining artificials out of the basis where possible; rows that
    // cannot be pivoted are linearly dependent and stay inert.
    for r in 0..n {
        if tab.basis[r] < m {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for col in 0..m {
            let a = tab.at(r, col).abs();
            if a > 1e-9 && best.is_none_or(|(_, b)| a > b) {
                best = Some((col, a));
            }
        }
        if let Some((col, _)) = best {
            tab.pivot(r, col);
        }
    }

    // Phase 2 on the real columns only.
    let mut cost2 = vec![0.0; cols];
    for (i, (_, b)) in rows.iter().enumerate() {
        cost2[i] = *b;
    }
    tab.price(&cost2);
    if !tab.optimize(m)? {
        return Ok(Raw::Infeasible);
    }

    // Multipliers from the artificial columns: reduced cost = -π_j.
    let mut x = DVector::from_fn(n, |j, _| -tab.reduced[m + j] * signs[j]);
    let active: Vec<usize> = tab.basis.iter().copied().filter(|&b| b < m).collect();
    if active.len() == n {
        let a = DMatrix::from_fn(n, n, |r, col| rows[active[r]].0[col]);
        let b = DVector::from_fn(n, |r, _| rows[active[r]].1);
        if let Some(polished) = a.lu().solve(&b) {
            if polished.iter().all(|v| v.is_finite())
                && max_violation(rows, &polished) <= max_violation(rows, &x).max(1e-12)
            {
                x = polished;
            }
        }
    }
    Ok(Raw::Optimal(x))
}

fn max_violation(rows: &[(Vec<f64>, f64)], x: &DVector<f64>) -> f64 {
    rows.iter()
        .map(|(a, b)| a.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() - b)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> HPolytope {
        HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0])
    }

    #[test]
    fn box_minimum() {
        let r = solve_lp(&DVector::from_vec(vec![1.0, 0.0]), &square(), Sense::Minimize).unwrap();
        assert!(r.is_optimal());
        assert!((r.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let p = HPolytope::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        )
        .unwrap();
        let r = solve_lp(&DVector::from_vec(vec![1.0]), &p, Sense::Minimize).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
        let r = solve_lp(&DVector::from_vec(vec![0.0]), &p, Sense::Maximize).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn triangle_minimum_at_origin() {
        let p = HPolytope::new(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        )
        .unwrap();
        // Vertices (0,0), (1,0), (0,1) give objective values 0, 1, 1.
        let r = solve_lp(&DVector::from_vec(vec![1.0, 1.0]), &p, Sense::Minimize).unwrap();
        assert!(r.is_optimal());
        assert!(r.objective.abs() < 1e-12);
        let x = r.point.unwrap();
        assert!(x.norm() < 1e-12);
    }

    #[test]
    fn half_plane_is_unbounded() {
        let p = HPolytope::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let r = solve_lp(&DVector::from_vec(vec![1.0, 0.0]), &p, Sense::Minimize).unwrap();
        assert_eq!(r.status, LpStatus::Unbounded);
        let r = solve_lp(&DVector::from_vec(vec![1.0, 0.0]), &p, Sense::Maximize).unwrap();
        assert!(r.is_optimal());
        assert!((r.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let err = solve_lp(&DVector::from_vec(vec![1.0]), &square(), Sense::Minimize).unwrap_err();
        assert!(matches!(err, GeometryError::DimensionMismatch { .. }));
    }

    #[test]
    fn degenerate_vertex_with_many_tight_rows() {
        // y ≥ s·|x| for several slopes: all 2k rows are tight at the apex.
        let mut a = Vec::new();
        let mut b = Vec::new();
        for k in 0..6 {
            let s = 0.5 + 0.25 * k as f64;
            a.extend_from_slice(&[s, -1.0, -s, -1.0]);
            b.extend_from_slice(&[0.0, 0.0]);
        }
        a.extend_from_slice(&[0.0, 1.0]);
        b.push(1.0);
        let p = HPolytope::new(DMatrix::from_row_slice(13, 2, &a), DVector::from_vec(b)).unwrap();
        let r = solve_lp(&DVector::from_vec(vec![0.3, 1.0]), &p, Sense::Minimize).unwrap();
        assert!(r.is_optimal());
        assert!(r.objective.abs() < 1e-12);
        assert!(p.max_violation(r.point.as_ref().unwrap()) < 1e-12);
    }
}
