//! Front end for the verifier: problem files, reports, plots, benchmarks.

pub mod bench;
pub mod commands;
pub mod plot;
pub mod problem;
pub mod report;

pub use bench::{Architecture, BenchSpec, BenchTable, Mode};
pub use commands::{run_verify, VerifyFlags, VerifyOutcome};
pub use problem::{load_problem, parse_problem, LoadError, Problem, ProblemDocument, ProblemOptions};
pub use report::Report;
