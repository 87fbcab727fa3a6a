#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use pwacert::bench::spring_mass_damper;
use pwacert_core::fixtures::{random_network, saturating_controller};
use pwacert_core::geometry::HPolytope;
use pwacert_core::pwa_nn::{Layer, Network, PwaActivation};
use pwacert_core::{LinearSystem, SafetyProblem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn integrator() -> LinearSystem {
    LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap()
}

/// `u = -x` on `[-1, 1]²`: one affine region.
pub fn linear_feedback() -> SafetyProblem {
    let net = Network::new(vec![Layer::new(
        -DMatrix::identity(2, 2),
        DVector::zeros(2),
        PwaActivation::identity(),
    )])
    .unwrap();
    SafetyProblem {
        system: integrator(),
        network: net,
        safe: HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]),
        obstacles: vec![],
    }
}

/// `u = -relu(x)` per axis on `[-1, 1]²`: the four quadrants.
pub fn quadrants() -> SafetyProblem {
    let net = Network::new(vec![
        Layer::new(DMatrix::identity(2, 2), DVector::zeros(2), PwaActivation::relu()),
        Layer::new(-DMatrix::identity(2, 2), DVector::zeros(2), PwaActivation::identity()),
    ])
    .unwrap();
    SafetyProblem {
        network: net,
        ..linear_feedback()
    }
}

/// Two wagons with a random 4x8x2 controller.
pub fn wagons() -> SafetyProblem {
    let (system, safe) = spring_mass_damper(2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    SafetyProblem {
        system,
        network: random_network(&mut rng, &[4, 8, 2], &PwaActivation::relu(), 0.3),
        safe,
        obstacles: vec![],
    }
}

pub fn corpus() -> Vec<(&'static str, SafetyProblem)> {
    vec![
        ("contracting.json", saturating_controller()),
        ("expanding.json", saturating_controller().with_negated_controller()),
        ("linear_feedback.json", linear_feedback()),
        ("quadrants.json", quadrants()),
        ("wagons.json", wagons()),
    ]
}

pub fn pwacert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwacert")).args(args).output().unwrap()
}

pub fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}
