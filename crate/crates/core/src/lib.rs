//! Safety verification of linear systems in closed loop with
//! piecewise-affine neural controllers.
//!
//! The pipeline decomposes a polytopic safe set into the controller's linear
//! regions ([`segmentation`]), intersects those regions with the faces of the
//! safe set and of every obstacle, and checks the sign of the closed-loop
//! vector field along the normal at each vertex of each piece
//! ([`invariance`]). On a piece the field is affine, so vertex signs decide
//! the sign on the whole piece.
//!
//! [`oracle`] holds deliberately simple reference machinery (brute-force
//! region enumeration, RK4 simulation, falsification) used to cross-check the
//! fast path.

pub mod fixtures;
pub mod geometry;
pub mod invariance;
pub mod oracle;
pub mod pwa_nn;
pub mod segmentation;
mod tolerance;

pub use geometry::{HPolytope, Tolerances, DEFAULT_TOL};

pub use invariance::{verify, LinearSystem, SafetyProblem, Verdict, VerifyOptions};
pub use pwa_nn::{ActivationPattern, ActiveParams, Layer, Network, PwaActivation};
pub use segmentation::{segment, LinearRegion, SegmentOptions, Segmentation};

