//! Reference problems with known structure, and seeded random generators.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::HPolytope;
use crate::invariance::{LinearSystem, SafetyProblem};
use crate::pwa_nn::{Layer, Network, PwaActivation};

/// Breakpoints and slopes of the one-dimensional shaping term
/// `ψ(s) = Σ w_k relu(s + β_k)` used by [`saturating_controller`]: zero for
/// `|s| ≥ 4`, `∓2` at `s = ∓3` and `±1`, `±2` at `s = ∓1` and `±3`.
const PSI: [(f64, f64); 6] = [(-2.0, 4.0), (4.0, 3.0), (-4.0, 1.0), (4.0, -1.0), (-4.0, -3.0), (2.0, -4.0)];

/// Integrator `ẋ = u` on `[-5, 5]²` with obstacles `[-3,-1]×[1,3]` and
/// `[1,3]×[-3,-1]`, under a two-layer controller
/// `u_i = sat(ψ(x_i) - Σ_σ σ_i relu(σ·x - 9))` with `sat` the unit hard
/// tanh and `σ` ranging over `{±1}²`.
///
/// `ψ` pushes away from both obstacles on all of their faces; the corner
/// terms turn the field inward near the four corners of the square and
/// vanish elsewhere on its boundary, where the field is tangential.
pub fn saturating_controller() -> SafetyProblem {
    let corners = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let mut w1 = DMatrix::zeros(16, 2);
    let mut b1 = DVector::zeros(16);
    let mut w2 = DMatrix::zeros(2, 16);
    for axis in 0..2 {
        for (k, &(weight, shift)) in PSI.iter().enumerate() {
            let i = axis * 6 + k;
            w1[(i, axis)] = 1.0;
            b1[i] = shift;
            w2[(axis, i)] = weight;
        }
    }
    for (k, &(s1, s2)) in corners.iter().enumerate() {
        let i = 12 + k;
        w1[(i, 0)] = s1;
        w1[(i, 1)] = s2;
        b1[i] = -9.0;
        w2[(0, i)] = -s1;
        w2[(1, i)] = -s2;
    }
    let network = Network::new(vec![
        Layer::new(w1, b1, PwaActivation::relu()),
        Layer::new(w2, DVector::zeros(2), PwaActivation::hard_tanh()),
    ])
    .expect("fixture dimensions chain");
    SafetyProblem {
        system: LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).expect("square system"),
        network,
        safe: HPolytope::from_box(&[-5.0, -5.0], &[5.0, 5.0]),
        obstacles: vec![
            HPolytope::from_box(&[-3.0, 1.0], &[-1.0, 3.0]).with_open(true),
            HPolytope::from_box(&[1.0, -3.0], &[3.0, -1.0]).with_open(true),
        ],
    }
}

/// One ReLU layer whose `n` hyperplanes are the tangents to the unit circle
/// at angles `πk/n`, over `[-10, 10]²`. Tangents are pairwise non-parallel
/// and never three-way concurrent, and all crossings lie inside the box.
pub fn tangent_lines(n: usize) -> (Network, HPolytope) {
    let mut w = DMatrix::zeros(n, 2);
    for k in 0..n {
        let t = std::f64::consts::PI * k as f64 / n as f64;
        w[(k, 0)] = t.cos();
        w[(k, 1)] = t.sin();
    }
    let net = Network::new(vec![Layer::new(w, DVector::from_element(n, -1.0), PwaActivation::relu())])
        .expect("single layer");
    (net, HPolytope::from_box(&[-10.0, -10.0], &[10.0, 10.0]))
}

/// Network `widths[0] → … → widths[last]` with `N(0, 1/fan_in)` weights,
/// `N(0, bias_std²)` biases, `hidden` activations and an identity output.
pub fn random_network(
    rng: &mut impl Rng,
    widths: &[usize],
    hidden: &PwaActivation,
    bias_std: f64,
) -> Network {
    assert!(widths.len() >= 2, "need input and output widths");
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
            let bias = Normal::new(0.0, bias_std).expect("non-negative std");
            let weights = DMatrix::from_fn(fan_out, fan_in, |_, _| normal.sample(rng));
            let bias = DVector::from_fn(fan_out, |_, _| bias.sample(rng));
            let act = if l + 2 == widths.len() {
                PwaActivation::identity()
            } else {
                hidden.clone()
            };
            Layer::new(weights, bias, act)
        })
        .collect();
    Network::new(layers).expect("widths chain")
}

/// Two-dimensional problem with a stabilizing feedback and random
/// perturbations, seeded. Some are safe and some are not.
///
/// The controller is `u = -k x + Σ_j v_j relu(w_j·x + c_j)` with the linear
/// part written as `relu(x_i) - relu(-x_i)` pairs, so the hidden layer has
/// `4 + perturbations` neurons. The safe set is a box around the origin;
/// about half of the problems carry one small box obstacle.
pub fn random_problem(seed: u64) -> SafetyProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = rng.random_range(0..=4usize);
    let hidden = 4 + extra;
    let gain = rng.random_range(0.5..2.0);
    let perturb = rng.random_range(0.0..1.5);

    let mut w1 = DMatrix::zeros(hidden, 2);
    let mut b1 = DVector::zeros(hidden);
    let mut w2 = DMatrix::zeros(2, hidden);
    for axis in 0..2 {
        w1[(2 * axis, axis)] = 1.0;
        w1[(2 * axis + 1, axis)] = -1.0;
        w2[(axis, 2 * axis)] = -gain;
        w2[(axis, 2 * axis + 1)] = gain;
    }
    for j in 4..hidden {
        for c in 0..2 {
            w1[(j, c)] = rng.random_range(-1.0..1.0);
            w2[(c, j)] = perturb * rng.random_range(-1.0..1.0);
        }
        b1[j] = rng.random_range(-1.0..1.0);
    }
    let network = Network::new(vec![
        Layer::new(w1, b1, PwaActivation::relu()),
        Layer::new(w2, DVector::zeros(2), PwaActivation::identity()),
    ])
    .expect("dimensions chain");

    let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.6..0.6));
    let system = LinearSystem::new(a, DMatrix::identity(2, 2)).expect("square system");
    let lo = [rng.random_range(-2.0..-1.0), rng.random_range(-2.0..-1.0)];
    let hi = [rng.random_range(1.0..2.0), rng.random_range(1.0..2.0)];
    let safe = HPolytope::from_box(&lo, &hi);
    let mut obstacles = vec![];
    if rng.random_bool(0.5) {
        let cx = rng.random_range(lo[0] + 0.3..hi[0] - 0.3);
        let cy = rng.random_range(lo[1] + 0.3..hi[1] - 0.3);
        let r = rng.random_range(0.05..0.2);
        obstacles.push(HPolytope::from_box(&[cx - r, cy - r], &[cx + r, cy + r]).with_open(true));
    }
    SafetyProblem {
        system,
        network,
        safe,
        obstacles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturating_controller_shape() {
        let p = saturating_controller();
        assert_eq!(p.network.n_hyperplanes(), 20);
        assert_eq!(p.network.n_parameters(), 16 * 3 + 2 * 17);
        // ψ at its knots, on the first axis, away from the corners.
        for (s, u) in [(-5.0, 0.0), (-3.0, -1.0), (-2.0, 0.0), (-1.0, 1.0), (0.0, 0.0), (1.0, -1.0), (3.0, 1.0), (4.5, 0.0)] {
            let y = p.network.eval(&DVector::from_vec(vec![s, 0.0])).unwrap();
            assert!((y[0] - u).abs() < 1e-12, "u1({s}) = {}", y[0]);
        }
        let y = p.network.eval(&DVector::from_vec(vec![5.0, 5.0])).unwrap();
        assert_eq!(y.as_slice(), &[-1.0, -1.0]);
    }

    #[test]
    fn random_problems_are_seeded() {
        let a = random_problem(3);
        let b = random_problem(3);
        assert_eq!(a.network, b.network);
        assert_eq!(a.system, b.system);
    }
}
