//! Convex-polytope primitives backed by a small dense LP solver.
//!
//! All values are immutable after construction and every operation is a pure
//! function, so geometry can be shared freely across worker threads.

mod lp;
mod polytope;
mod vertices;

pub use lp::{solve_lp, LpResult, LpStatus, Sense};
pub use polytope::{Face, HPolytope, RowReduction, Side, VPolytope};
pub use vertices::vertices_active_set;

pub use crate::tolerance::{Tolerances, DEFAULT_TOL};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("polytope has zero ambient dimension")]
    ZeroDimension,
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("polytope is unbounded")]
    UnboundedPolytope,
    #[error("simplex iteration limit reached")]
    LpIterationLimit,
}
