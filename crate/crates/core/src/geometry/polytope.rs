use nalgebra::{DMatrix, DVector, RowDVector};

use super::lp::{feasible_point, solve_lp, LpStatus, Sense};
use super::vertices::enumerate_vertices;
use super::GeometryError;

/// Halfspace-represented convex polyhedron `{x | a x ≤ b}`.
///
/// `open` marks sets whose inequalities are strict (obstacles). Every
/// geometric operation works on the closure; only the invariance check reads
/// the flag.
#[derive(Clone, Debug, PartialEq)]
pub struct HPolytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    open: bool,
}

/// Which side of a hyperplane `a·x = b` to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `a·x ≤ b`
    Below,
    /// `a·x ≥ b`
    Above,
}

impl HPolytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, GeometryError> {
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: a.nrows(),
                found: b.len(),
            });
        }
        if a.ncols() == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        Ok(Self { a, b, open: false })
    }

    /// Builds from row slices; all rows must have length `dim`.
    pub fn from_rows(dim: usize, rows: &[(Vec<f64>, f64)]) -> Result<Self, GeometryError> {
        let mut a = DMatrix::zeros(rows.len(), dim);
        let mut b = DVector::zeros(rows.len());
        for (i, (row, rhs)) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = *v;
            }
            b[i] = *rhs;
        }
        Self::new(a, b)
    }

    /// Axis-aligned box `lo ≤ x ≤ hi` with rows ordered `x_0 ≤ hi_0, -x_0 ≤ -lo_0, …`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds must have equal length");
        let n = lo.len();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for k in 0..n {
            a[(2 * k, k)] = 1.0;
            b[2 * k] = hi[k];
            a[(2 * k + 1, k)] = -1.0;
            b[2 * k + 1] = -lo[k];
        }
        Self { a, b, open: false }
    }

    /// The whole space, represented with zero rows.
    pub fn universe(dim: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, dim),
            b: DVector::zeros(0),
            open: false,
        }
    }

    pub fn with_open(mut self, open: bool) -> Self {
        self.open = open;
        self
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn row(&self, i: usize) -> RowDVector<f64> {
        self.a.row(i).into_owned()
    }

    /// Largest value of `a_i·x - b_i` over all rows (negative inside).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.n_rows())
            .map(|i| self.a.row(i).dot(&x.transpose()) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Membership of the closure with an absolute slack on every row.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.n_rows()).all(|i| {
            let row = self.a.row(i);
            let scale = row.norm().max(1e-300);
            (row.dot(&x.transpose()) - self.b[i]) / scale <= tol
        })
    }

    /// Strict membership: every row is slack by more than `tol` (Euclidean).
    pub fn contains_interior(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.n_rows()).all(|i| {
            let row = self.a.row(i);
            let scale = row.norm().max(1e-300);
            (row.dot(&x.transpose()) - self.b[i]) / scale < -tol
        })
    }

    /// Appends `normal·x ≤ offset` (or `≥` for [`Side::Above`]).
    pub fn intersect_halfspace(&self, normal: &DVector<f64>, offset: f64, side: Side) -> Self {
        let (row, rhs) = match side {
            Side::Below => (normal.transpose(), offset),
            Side::Above => (-normal.transpose(), -offset),
        };
        let m = self.n_rows();
        let mut a = self.a.clone().insert_row(m, 0.0);
        a.set_row(m, &row);
        let mut b = self.b.clone().insert_row(m, 0.0);
        b[m] = rhs;
        Self {
            a,
            b,
            open: self.open,
        }
    }

    /// Row-wise concatenation; the result is `self ∩ other` exactly.
    pub fn intersect(&self, other: &HPolytope) -> Result<Self, GeometryError> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let m = self.n_rows();
        let k = other.n_rows();
        let mut a = DMatrix::zeros(m + k, self.dim());
        a.rows_mut(0, m).copy_from(&self.a);
        a.rows_mut(m, k).copy_from(&other.a);
        let mut b = DVector::zeros(m + k);
        b.rows_mut(0, m).copy_from(&self.b);
        b.rows_mut(m, k).copy_from(&other.b);
        Ok(Self { a, b, open: false })
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            a: self.a.select_rows(rows),
            b: self.b.select_rows(rows),
            open: self.open,
        }
    }

    /// Multiplies every row (and its offset) by a positive factor.
    pub fn scale_rows(&self, factors: &[f64]) -> Self {
        let mut out = self.clone();
        for (i, f) in factors.iter().enumerate() {
            assert!(*f > 0.0, "row scale must be positive");
            out.a.row_mut(i).scale_mut(*f);
            out.b[i] *= f;
        }
        out
    }

    /// True iff no point satisfies every row within `tol` (Euclidean slack).
    pub fn is_empty(&self, tol: f64) -> Result<bool, GeometryError> {
        Ok(feasible_point(self, tol)?.is_none())
    }

    /// Some point of the (slightly relaxed) set, if nonempty.
    pub fn feasible_point(&self, tol: f64) -> Result<Option<DVector<f64>>, GeometryError> {
        feasible_point(self, tol)
    }

    /// Center and radius of the largest inscribed Euclidean ball.
    ///
    /// Solved as one LP in `(x, r)` with rows `a_i·x + ‖a_i‖ r ≤ b_i`. The
    /// radius is clamped at zero for lower-dimensional sets.
    pub fn chebyshev_center(&self, tol: f64) -> Result<(DVector<f64>, f64), GeometryError> {
        let n = self.dim();
        let m = self.n_rows();
        let mut a = DMatrix::zeros(m, n + 1);
        for i in 0..m {
            let row = self.a.row(i);
            let norm = row.norm();
            for j in 0..n {
                a[(i, j)] = row[j];
            }
            a[(i, n)] = norm;
        }
        let lifted = HPolytope::new(a, self.b.clone())?;
        let mut objective = DVector::zeros(n + 1);
        objective[n] = 1.0;
        let res = solve_lp(&objective, &lifted, Sense::Maximize)?;
        match res.status {
            LpStatus::Optimal => {
                let z = res.point.expect("optimal LP carries a point");
                let r = z[n];
                if r < -tol {
                    return Err(GeometryError::EmptyPolytope);
                }
                Ok((z.rows(0, n).into_owned(), r.max(0.0)))
            }
            LpStatus::Unbounded => Err(GeometryError::UnboundedPolytope),
            LpStatus::Infeasible => Err(GeometryError::EmptyPolytope),
        }
    }

    /// Drops every row implied by the remaining ones.
    pub fn remove_redundant(&self, tol: f64) -> Result<Self, GeometryError> {
        Ok(self.select_rows(&self.irredundant_rows(tol)?))
    }

    /// Indices of the rows kept by [`HPolytope::remove_redundant`], in order.
    ///
    /// A row survives only if maximizing its left-hand side over the other
    /// surviving rows (capped at `b_i + ‖a_i‖`) exceeds `b_i + tol ‖a_i‖`.
    /// An empty set keeps all of its rows.
    pub fn irredundant_rows(&self, tol: f64) -> Result<Vec<usize>, GeometryError> {
        Ok(self.reduce(tol)?.kept)
    }

    /// [`HPolytope::irredundant_rows`] together with `(i, max a_i·x)` for
    /// every dropped row with nonzero normal. The maximum is taken over the
    /// polytope itself, up to `tol ‖a_i‖`.
    pub fn reduce(&self, tol: f64) -> Result<RowReduction, GeometryError> {
        if self.is_empty(tol)? {
            return Ok(RowReduction {
                kept: (0..self.n_rows()).collect(),
                dropped: vec![],
            });
        }
        let mut keep: Vec<bool> = (0..self.n_rows())
            .map(|i| self.a.row(i).norm() > 1e-300)
            .collect();
        let mut dropped = vec![];
        for i in 0..self.n_rows() {
            if !keep[i] {
                continue;
            }
            let norm = self.a.row(i).norm();
            let others: Vec<usize> = (0..self.n_rows()).filter(|&k| k != i && keep[k]).collect();
            let normal = self.a.row(i).transpose();
            let probe = self
                .select_rows(&others)
                .intersect_halfspace(&normal, self.b[i] + norm, Side::Below);
            let res = solve_lp(&normal, &probe, Sense::Maximize)?;
            if res.status == LpStatus::Optimal && (res.objective - self.b[i]) / norm <= tol {
                keep[i] = false;
                dropped.push((i, res.objective));
            }
        }
        Ok(RowReduction {
            kept: (0..self.n_rows()).filter(|&i| keep[i]).collect(),
            dropped,
        })
    }

    /// One face per row: `F_i = {x ∈ P | a_i·x = b_i}`.
    ///
    /// Call on a minimal representation; redundant rows yield faces that are
    /// lower-dimensional or empty.
    pub fn faces(&self) -> Vec<Face> {
        (0..self.n_rows())
            .map(|i| {
                let normal = self.a.row(i).transpose();
                let geometry = self.intersect_halfspace(&normal, self.b[i], Side::Above);
                Face {
                    row_index: i,
                    normal,
                    offset: self.b[i],
                    geometry: geometry.with_open(false),
                }
            })
            .collect()
    }

    /// Exact vertex set of a bounded polytope (possibly lower-dimensional).
    pub fn vertices(&self, tol: f64) -> Result<VPolytope, GeometryError> {
        enumerate_vertices(self, tol)
    }

    /// `max a_i·x` over `other`, for every row of `self`, is within `tol`
    /// of `b_i` (Euclidean). An empty `other` is a subset of anything.
    pub fn contains_polytope(&self, other: &HPolytope, tol: f64) -> Result<bool, GeometryError> {
        for i in 0..self.n_rows() {
            let normal = self.a.row(i).transpose();
            let norm = normal.norm().max(1e-300);
            let res = solve_lp(&normal, other, Sense::Maximize)?;
            match res.status {
                LpStatus::Optimal => {
                    if (res.objective - self.b[i]) / norm > tol {
                        return Ok(false);
                    }
                }
                LpStatus::Unbounded => return Ok(false),
                LpStatus::Infeasible => return Ok(true),
            }
        }
        Ok(true)
    }

    /// Axis-aligned bounding box via `2n` LPs.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            for (sense, out) in [(Sense::Minimize, &mut lo), (Sense::Maximize, &mut hi)] {
                let res = solve_lp(&e, self, sense)?;
                match res.status {
                    LpStatus::Optimal => out[k] = res.objective,
                    LpStatus::Unbounded => return Err(GeometryError::UnboundedPolytope),
                    LpStatus::Infeasible => return Err(GeometryError::EmptyPolytope),
                }
            }
        }
        Ok((lo, hi))
    }
}

/// Outcome of [`HPolytope::reduce`].
#[derive(Clone, Debug, PartialEq)]
pub struct RowReduction {
    pub kept: Vec<usize>,
    /// `(row, max a_row·x)` for each dropped row.
    pub dropped: Vec<(usize, f64)>,
}

/// Vertex-represented polytope.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VPolytope {
    pub vertices: Vec<DVector<f64>>,
}

impl VPolytope {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.vertices.iter()
    }
}

/// Facet `F_i = H_i ∩ P` of a polytope, kept as its own H-polytope.
#[derive(Clone, Debug)]
pub struct Face {
    pub row_index: usize,
    pub normal: DVector<f64>,
    pub offset: f64,
    pub geometry: HPolytope,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DEFAULT_TOL;

    fn triangle() -> HPolytope {
        HPolytope::from_rows(
            2,
            &[(vec![-1.0, 0.0], 0.0), (vec![0.0, -1.0], 0.0), (vec![1.0, 1.0], 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn unit_box_chebyshev() {
        let p = HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
        let (c, r) = p.chebyshev_center(DEFAULT_TOL.lp).unwrap();
        assert!(c.norm() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_chebyshev_matches_incircle() {
        // Incircle of a right triangle with legs a = b = 1: r = (a + b - c)/2.
        let expected = (2.0 - 2f64.sqrt()) / 2.0;
        let (c, r) = triangle().chebyshev_center(DEFAULT_TOL.lp).unwrap();
        assert!((r - expected).abs() < 1e-12);
        assert!((c[0] - expected).abs() < 1e-12 && (c[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn degenerate_segment_has_zero_radius() {
        let p = HPolytope::from_rows(
            2,
            &[
                (vec![1.0, 0.0], 1.0),
                (vec![-1.0, 0.0], 0.0),
                (vec![0.0, 1.0], 0.0),
                (vec![0.0, -1.0], 0.0),
            ],
        )
        .unwrap();
        let (_, r) = p.chebyshev_center(DEFAULT_TOL.lp).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn chebyshev_of_empty_set_errors() {
        let p = HPolytope::from_rows(1, &[(vec![1.0], 0.0), (vec![-1.0], -1.0)]).unwrap();
        assert!(matches!(
            p.chebyshev_center(DEFAULT_TOL.lp),
            Err(GeometryError::EmptyPolytope)
        ));
    }

    #[test]
    fn emptiness() {
        let p = HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
        assert!(!p.is_empty(DEFAULT_TOL.lp).unwrap());
        let q = HPolytope::from_rows(1, &[(vec![1.0], 0.0), (vec![-1.0], -1.0)]).unwrap();
        assert!(q.is_empty(DEFAULT_TOL.lp).unwrap());
    }

    #[test]
    fn intersect_boxes() {
        let p = HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
        let q = HPolytope::from_box(&[0.0, 0.0], &[2.0, 2.0]);
        let r = p.intersect(&q).unwrap();
        let expected = HPolytope::from_box(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(r.contains_polytope(&expected, 1e-9).unwrap());
        assert!(expected.contains_polytope(&r, 1e-9).unwrap());
        let pp = p.intersect(&p).unwrap();
        assert_eq!(pp.n_rows(), 8);
        assert!(pp.contains_polytope(&p, 1e-9).unwrap() && p.contains_polytope(&pp, 1e-9).unwrap());
        let far = HPolytope::from_box(&[3.0, 3.0], &[4.0, 4.0]);
        assert!(p.intersect(&far).unwrap().is_empty(DEFAULT_TOL.lp).unwrap());
        let line = HPolytope::from_box(&[0.0], &[1.0]);
        assert!(p.intersect(&line).is_err());
    }

    #[test]
    fn halfspace_cuts() {
        let p = HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
        let e0 = DVector::from_vec(vec![1.0, 0.0]);
        let left = p.intersect_halfspace(&e0, 0.0, Side::Below);
        let expected = HPolytope::from_box(&[-1.0, -1.0], &[0.0, 1.0]);
        assert!(left.contains_polytope(&expected, 1e-9).unwrap());
        assert!(expected.contains_polytope(&left, 1e-9).unwrap());
        let same = p.intersect_halfspace(&e0, 10.0, Side::Below);
        assert!(same.contains_polytope(&p, 1e-9).unwrap());
        let gone = p.intersect_halfspace(&e0, -10.0, Side::Below);
        assert!(gone.is_empty(DEFAULT_TOL.lp).unwrap());
        let right = p.intersect_halfspace(&e0, 0.5, Side::Above);
        assert!(right.contains(&DVector::from_vec(vec![0.75, 0.0]), 0.0));
        assert!(!right.contains(&DVector::from_vec(vec![0.25, 0.0]), 0.0));
    }

    #[test]
    fn redundancy_removal() {
        let p = HPolytope::from_rows(1, &[(vec![1.0], 1.0), (vec![1.0], 2.0), (vec![-1.0], 0.0)]).unwrap();
        let q = p.remove_redundant(DEFAULT_TOL.lp).unwrap();
        assert_eq!(q.n_rows(), 2);
        assert_eq!(q.b().as_slice(), &[1.0, 0.0]);

        let cube = HPolytope::from_box(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(cube.remove_redundant(DEFAULT_TOL.lp).unwrap(), cube);

        let dup = cube.intersect(&cube).unwrap().remove_redundant(DEFAULT_TOL.lp).unwrap();
        assert_eq!(dup.n_rows(), 4);
    }

    #[test]
    fn faces_of_square_and_triangle() {
        let sq = HPolytope::from_box(&[0.0, 0.0], &[1.0, 1.0]);
        let faces = sq.faces();
        assert_eq!(faces.len(), 4);
        for f in &faces {
            let v = f.geometry.vertices(DEFAULT_TOL.face).unwrap();
            assert_eq!(v.len(), 2);
            for x in v.iter() {
                assert!((f.normal.dot(x) - f.offset).abs() < 1e-12);
            }
        }
        assert_eq!(triangle().faces().len(), 3);
    }

    #[test]
    fn bounding_box_of_triangle() {
        let (lo, hi) = triangle().bounding_box().unwrap();
        assert!(lo.norm() < 1e-12);
        assert!((hi[0] - 1.0).abs() < 1e-12 && (hi[1] - 1.0).abs() < 1e-12);
    }
}
