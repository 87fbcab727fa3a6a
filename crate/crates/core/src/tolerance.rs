/// Numerical tolerances shared by every stage of the verifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// LP feasibility slack (Euclidean, on unit-normalized rows).
    pub lp: f64,
    /// On-hyperplane and vertex tightness tests.
    pub face: f64,
    /// Cells whose Chebyshev radius falls below this are treated as empty.
    pub radius: f64,
    /// Band around zero in which a vertex margin is accepted.
    pub margin: f64,
}

pub const DEFAULT_TOL: Tolerances = Tolerances {
    lp: 1e-9,
    face: 1e-7,
    radius: 1e-8,
    margin: 1e-9,
};

impl Default for Tolerances {
    fn default() -> Self {
        DEFAULT_TOL
    }
}
