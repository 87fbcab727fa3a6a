//! Feed-forward networks with continuous piecewise-affine activations.
//!
//! A scalar activation is stored as breakpoints `m_1 < … < m_{K-1}` and one
//! `(slope, intercept)` pair per segment. Segment `j` (0-based here) covers
//! `m_{j-1} < x ≤ m_j`: segments are left-open and right-closed, so a point
//! sitting exactly on a breakpoint belongs to the lower segment.
//!
//! Fixing a segment per neuron (an [`ActivationPattern`]) turns every layer
//! into an affine map; composing them gives the active parameters
//! `z^(l) = E^(l) x + G^(l)`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("activation: {0}")]
    InvalidActivation(String),
    #[error("activation is discontinuous at breakpoint {breakpoint}: left {left}, right {right}")]
    NonContinuousActivation { breakpoint: f64, left: f64, right: f64 },
    #[error("layer {layer}: {detail}")]
    DimensionMismatch { layer: usize, detail: String },
    #[error("input has length {found}, network expects {expected}")]
    InputDimensionMismatch { expected: usize, found: usize },
    #[error("pattern does not match the network: {0}")]
    PatternMismatch(String),
    #[error("network has no layers")]
    Empty,
}

/// Tolerance of the continuity check at breakpoints.
pub const CONTINUITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PwaActivation {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
}

/// Value of an activation together with the affine piece that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationEval {
    pub value: f64,
    pub segment: usize,
    pub slope: f64,
    pub intercept: f64,
}

impl PwaActivation {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, intercepts: Vec<f64>) -> Result<Self, NetworkError> {
        if slopes.len() != breakpoints.len() + 1 || intercepts.len() != slopes.len() {
            return Err(NetworkError::InvalidActivation(format!(
                "{} breakpoints need {} slopes and intercepts, got {} and {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                slopes.len(),
                intercepts.len()
            )));
        }
        if breakpoints
            .iter()
            .chain(&slopes)
            .chain(&intercepts)
            .any(|v| !v.is_finite())
        {
            return Err(NetworkError::InvalidActivation("non-finite coefficient".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NetworkError::InvalidActivation(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        for (j, &m) in breakpoints.iter().enumerate() {
            let left = slopes[j] * m + intercepts[j];
            let right = slopes[j + 1] * m + intercepts[j + 1];
            if (left - right).abs() > CONTINUITY_TOL * (1.0 + left.abs().max(right.abs())) {
                return Err(NetworkError::NonContinuousActivation { breakpoint: m, left, right });
            }
        }
        Ok(Self {
            breakpoints,
            slopes,
            intercepts,
        })
    }

    pub fn identity() -> Self {
        Self {
            breakpoints: vec![],
            slopes: vec![1.0],
            intercepts: vec![0.0],
        }
    }

    pub fn relu() -> Self {
        Self {
            breakpoints: vec![0.0],
            slopes: vec![0.0, 1.0],
            intercepts: vec![0.0, 0.0],
        }
    }

    pub fn leaky_relu(alpha: f64) -> Self {
        Self {
            breakpoints: vec![0.0],
            slopes: vec![alpha, 1.0],
            intercepts: vec![0.0, 0.0],
        }
    }

    /// Piecewise-linear saturation to `[-1, 1]`.
    pub fn hard_tanh() -> Self {
        Self {
            breakpoints: vec![-1.0, 1.0],
            slopes: vec![0.0, 1.0, 0.0],
            intercepts: vec![-1.0, 0.0, 1.0],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn n_segments(&self) -> usize {
        self.slopes.len()
    }

    pub fn is_identity(&self) -> bool {
        self.breakpoints.is_empty() && self.slopes[0] == 1.0 && self.intercepts[0] == 0.0
    }

    /// Segment containing `x` under the left-open/right-closed convention.
    #[inline]
    pub fn segment(&self, x: f64) -> usize {
        self.breakpoints.iter().take_while(|&&m| x > m).count()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> ActivationEval {
        let segment = self.segment(x);
        let slope = self.slopes[segment];
        let intercept = self.intercepts[segment];
        ActivationEval {
            value: slope * x + intercept,
            segment,
            slope,
            intercept,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: PwaActivation,
}

impl Layer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, activation: PwaActivation) -> Self {
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn n_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.weights.ncols()
    }

    /// Breakpoint hyperplanes contributed by this layer.
    pub fn n_hyperplanes(&self) -> usize {
        self.n_out() * self.activation.breakpoints().len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Per layer, per neuron: index of the active activation segment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ActivationPattern(pub Vec<Vec<usize>>);

impl ActivationPattern {
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn layer(&self, l: usize) -> &[usize] {
        &self.0[l]
    }

    /// Pattern restricted to the first `depth` layers.
    pub fn truncated(&self, depth: usize) -> Self {
        Self(self.0[..depth.min(self.0.len())].to_vec())
    }
}

/// `z = matrix · x + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }
}

/// Active parameters `(E^(l), G^(l))` for layers `1..=depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveParams {
    pub n_in: usize,
    pub layers: Vec<AffineMap>,
}

impl ActiveParams {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Map of the deepest computed layer; the identity at depth 0.
    pub fn last(&self) -> AffineMap {
        self.layers
            .last()
            .cloned()
            .unwrap_or_else(|| AffineMap::identity(self.n_in))
    }
}

/// Result of an exact forward evaluation.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub output: DVector<f64>,
    pub preactivations: Vec<DVector<f64>>,
    pub pattern: ActivationPattern,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weights.nrows() != layer.bias.len() {
                return Err(NetworkError::DimensionMismatch {
                    layer: l,
                    detail: format!(
                        "weights have {} rows but bias has {} entries",
                        layer.weights.nrows(),
                        layer.bias.len()
                    ),
                });
            }
            if layer.weights.nrows() == 0 || layer.weights.ncols() == 0 {
                return Err(NetworkError::DimensionMismatch {
                    layer: l,
                    detail: "empty weight matrix".into(),
                });
            }
            if l > 0 && layer.n_in() != layers[l - 1].n_out() {
                return Err(NetworkError::DimensionMismatch {
                    layer: l,
                    detail: format!(
                        "weights have {} columns but the previous layer has {} neurons",
                        layer.n_in(),
                        layers[l - 1].n_out()
                    ),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    /// Neurons outside the output layer.
    pub fn n_hidden_neurons(&self) -> usize {
        self.layers[..self.layers.len() - 1].iter().map(Layer::n_out).sum()
    }

    /// Weights plus biases over all layers.
    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.n_out() * (l.n_in() + 1)).sum()
    }

    pub fn n_hyperplanes(&self) -> usize {
        self.layers.iter().map(Layer::n_hyperplanes).sum()
    }

    /// Same architecture with the output negated.
    pub fn negated_output(&self) -> Self {
        let mut layers = self.layers.clone();
        let last = layers.last_mut().expect("network has layers");
        let act = &last.activation;
        // Negating the output commutes with an odd activation only; fold the
        // sign into a mirrored activation instead.
        let mirrored = PwaActivation {
            breakpoints: act.breakpoints.iter().rev().map(|m| -m).collect(),
            slopes: act.slopes.iter().rev().copied().collect(),
            intercepts: act.intercepts.iter().rev().map(|d| -d).collect(),
        };
        last.weights = -&last.weights;
        last.bias = -&last.bias;
        last.activation = mirrored;
        Self { layers }
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<ForwardPass, NetworkError> {
        if x.len() != self.n_in() {
            return Err(NetworkError::InputDimensionMismatch {
                expected: self.n_in(),
                found: x.len(),
            });
        }
        let mut z = x.clone();
        let mut preactivations = Vec::with_capacity(self.layers.len());
        let mut pattern = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let pre = &layer.weights * &z + &layer.bias;
            let mut segs = Vec::with_capacity(pre.len());
            z = DVector::from_fn(pre.len(), |i, _| {
                let e = layer.activation.eval(pre[i]);
                segs.push(e.segment);
                e.value
            });
            preactivations.push(pre);
            pattern.push(segs);
        }
        Ok(ForwardPass {
            output: z,
            preactivations,
            pattern: ActivationPattern(pattern),
        })
    }

    /// Network output only.
    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, NetworkError> {
        Ok(self.forward(x)?.output)
    }

    /// Allocation-free evaluation for hot loops. `scratch` is resized as
    /// needed; `out` receives the output.
    pub fn eval_into(&self, x: &[f64], scratch: &mut EvalScratch, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in());
        debug_assert_eq!(out.len(), self.n_out());
        scratch.a.clear();
        scratch.a.extend_from_slice(x);
        for layer in &self.layers {
            let (rows, cols) = layer.weights.shape();
            let w = layer.weights.as_slice();
            scratch.b.clear();
            scratch.b.extend_from_slice(layer.bias.as_slice());
            // Column-major storage.
            for (c, &zc) in scratch.a.iter().enumerate().take(cols) {
                if zc == 0.0 {
                    continue;
                }
                let col = &w[c * rows..(c + 1) * rows];
                for (acc, wv) in scratch.b.iter_mut().zip(col) {
                    *acc += wv * zc;
                }
            }
            for v in scratch.b.iter_mut() {
                *v = layer.activation.eval(*v).value;
            }
            std::mem::swap(&mut scratch.a, &mut scratch.b);
        }
        out.copy_from_slice(&scratch.a);
    }

    /// `(E^(l), G^(l))` for every layer covered by `pattern` (which may be a
    /// prefix of the full depth), via
    /// `E^(l) = C^(l) W^(l) E^(l-1)`, `G^(l) = C^(l) (W^(l) G^(l-1) + b^(l)) + d^(l)`
    /// with `C^(l)`, `d^(l)` the selected slopes and intercepts.
    pub fn active_params_from_pattern(&self, pattern: &ActivationPattern) -> Result<ActiveParams, NetworkError> {
        if pattern.depth() > self.n_layers() {
            return Err(NetworkError::PatternMismatch(format!(
                "pattern has {} layers, network has {}",
                pattern.depth(),
                self.n_layers()
            )));
        }
        let mut params = ActiveParams {
            n_in: self.n_in(),
            layers: Vec::with_capacity(pattern.depth()),
        };
        for segs in &pattern.0 {
            params = self.extend_params(&params, segs)?;
        }
        Ok(params)
    }

    /// Appends layer `params.depth()` with segment choice `segs`.
    pub fn extend_params(&self, params: &ActiveParams, segs: &[usize]) -> Result<ActiveParams, NetworkError> {
        let l = params.depth();
        let layer = self.layers.get(l).ok_or_else(|| {
            NetworkError::PatternMismatch(format!("network has no layer {l}"))
        })?;
        if segs.len() != layer.n_out() {
            return Err(NetworkError::PatternMismatch(format!(
                "layer {l} has {} neurons, pattern lists {}",
                layer.n_out(),
                segs.len()
            )));
        }
        let k = layer.activation.n_segments();
        if let Some(bad) = segs.iter().find(|&&s| s >= k) {
            return Err(NetworkError::PatternMismatch(format!(
                "layer {l}: segment {bad} out of range (activation has {k})"
            )));
        }
        let prev = params.last();
        let mut e = &layer.weights * &prev.matrix;
        let mut g = &layer.weights * &prev.offset + &layer.bias;
        for (i, &s) in segs.iter().enumerate() {
            let slope = layer.activation.slopes[s];
            e.row_mut(i).scale_mut(slope);
            g[i] = slope * g[i] + layer.activation.intercepts[s];
        }
        let mut layers = params.layers.clone();
        layers.push(AffineMap { matrix: e, offset: g });
        Ok(ActiveParams {
            n_in: params.n_in,
            layers,
        })
    }

    /// Active parameters of the region containing `x`; the Jacobian of the
    /// network there and the matching offset.
    pub fn active_params_at_point(&self, x: &DVector<f64>) -> Result<ActiveParams, NetworkError> {
        let pass = self.forward(x)?;
        self.active_params_from_pattern(&pass.pattern)
    }
}

/// Reusable buffers for [`Network::eval_into`].
#[derive(Clone, Debug, Default)]
pub struct EvalScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_segments() {
        let r = PwaActivation::relu();
        let e = r.eval(-2.0);
        assert_eq!((e.value, e.segment), (0.0, 0));
        assert_eq!(r.eval(0.0).segment, 0);
        assert_eq!(r.eval(1e-300).segment, 1);
        assert_eq!(r.eval(3.0).value, 3.0);
    }

    #[test]
    fn leaky_relu_value() {
        let e = PwaActivation::leaky_relu(0.01).eval(-2.0);
        assert!((e.value + 0.02).abs() < 1e-15);
        assert_eq!(e.segment, 0);
        assert_eq!(e.slope, 0.01);
    }

    #[test]
    fn activation_validation() {
        assert!(PwaActivation::new(vec![0.0], vec![0.0, 1.0], vec![0.0, 1.0]).is_err_and(|e| matches!(
            e,
            NetworkError::NonContinuousActivation { .. }
        )));
        assert!(PwaActivation::new(vec![1.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0; 3]).is_err());
        assert!(PwaActivation::new(vec![0.0], vec![1.0], vec![0.0]).is_err());
        let ht = PwaActivation::new(vec![-1.0, 1.0], vec![0.0, 1.0, 0.0], vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(ht, PwaActivation::hard_tanh());
        assert_eq!(ht.eval(5.0).value, 1.0);
        assert_eq!(ht.eval(1.0).segment, 1);
    }

    #[test]
    fn single_relu_layer_forward() {
        let net = Network::new(vec![Layer::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            PwaActivation::relu(),
        )])
        .unwrap();
        let pass = net.forward(&DVector::from_vec(vec![1.0, -1.0])).unwrap();
        assert_eq!(pass.output.as_slice(), &[1.0, 0.0]);
        assert_eq!(pass.pattern, ActivationPattern(vec![vec![1, 0]]));
        assert!(net.forward(&DVector::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn identity_network_is_affine() {
        let w1 = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.0, 3.0]);
        let b1 = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let w2 = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 2.0]);
        let b2 = DVector::from_vec(vec![0.5]);
        let net = Network::new(vec![
            Layer::new(w1.clone(), b1.clone(), PwaActivation::identity()),
            Layer::new(w2.clone(), b2.clone(), PwaActivation::identity()),
        ])
        .unwrap();
        let x = DVector::from_vec(vec![0.7, -1.3]);
        let expected = &w2 * (&w1 * &x + &b1) + &b2;
        assert!((net.eval(&x).unwrap() - &expected).amax() < 1e-14);
        let p = net.active_params_at_point(&x).unwrap();
        assert!((&p.last().matrix - &w2 * &w1).amax() < 1e-14);
        assert!((&p.last().offset - (&w2 * &b1 + &b2)).amax() < 1e-14);
        let q = net.active_params_at_point(&DVector::from_vec(vec![-9.0, 4.0])).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn all_active_relu_params() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let b = DVector::from_vec(vec![0.5, -0.5]);
        let net = Network::new(vec![Layer::new(w.clone(), b.clone(), PwaActivation::relu())]).unwrap();
        let p = net
            .active_params_from_pattern(&ActivationPattern(vec![vec![1, 1]]))
            .unwrap();
        assert_eq!(p.last().matrix, w);
        assert_eq!(p.last().offset, b);
        assert!(net
            .active_params_from_pattern(&ActivationPattern(vec![vec![2, 1]]))
            .is_err());
        assert!(net
            .active_params_from_pattern(&ActivationPattern(vec![vec![1]]))
            .is_err());
    }

    #[test]
    fn layer_chain_validation() {
        let bad = Network::new(vec![
            Layer::new(DMatrix::zeros(3, 2), DVector::zeros(3), PwaActivation::relu()),
            Layer::new(DMatrix::zeros(1, 2), DVector::zeros(1), PwaActivation::identity()),
        ]);
        assert!(matches!(bad, Err(NetworkError::DimensionMismatch { layer: 1, .. })));
        let bad = Network::new(vec![Layer::new(DMatrix::zeros(3, 2), DVector::zeros(2), PwaActivation::relu())]);
        assert!(matches!(bad, Err(NetworkError::DimensionMismatch { layer: 0, .. })));
    }

    #[test]
    fn parameter_count() {
        // 2 x 16 x 16 x 2
        let layers = [(16, 2), (16, 16), (2, 16)]
            .iter()
            .map(|&(o, i)| Layer::new(DMatrix::zeros(o, i), DVector::zeros(o), PwaActivation::relu()))
            .collect();
        let net = Network::new(layers).unwrap();
        assert_eq!(net.n_parameters(), 354);
        assert_eq!(net.n_hidden_neurons(), 32);
    }

    #[test]
    fn negated_output_flips_sign() {
        let net = Network::new(vec![
            Layer::new(
                DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 1.0]),
                DVector::from_vec(vec![0.2, -0.1]),
                PwaActivation::relu(),
            ),
            Layer::new(
                DMatrix::from_row_slice(2, 2, &[1.5, -1.0, 0.3, 2.0]),
                DVector::from_vec(vec![0.1, -0.4]),
                PwaActivation::new(vec![-0.5, 1.0], vec![0.2, 1.0, 0.0], vec![-0.4, 0.0, 1.0]).unwrap(),
            ),
        ])
        .unwrap();
        let neg = net.negated_output();
        for x in [[0.3, -0.7], [-2.0, 1.0], [1.5, 0.2]] {
            let x = DVector::from_row_slice(&x);
            assert!((net.eval(&x).unwrap() + neg.eval(&x).unwrap()).amax() < 1e-14);
        }
    }

    #[test]
    fn eval_into_matches_forward() {
        let net = Network::new(vec![
            Layer::new(
                DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 1.0, 0.0, 1.0]),
                DVector::from_vec(vec![0.2, -0.1, 0.0]),
                PwaActivation::leaky_relu(0.01),
            ),
            Layer::new(
                DMatrix::from_row_slice(2, 3, &[1.5, -1.0, 0.3, 2.0, 0.1, -0.2]),
                DVector::from_vec(vec![0.1, -0.4]),
                PwaActivation::identity(),
            ),
        ])
        .unwrap();
        let mut scratch = EvalScratch::default();
        let mut out = [0.0; 2];
        let x = [0.4, -0.9];
        net.eval_into(&x, &mut scratch, &mut out);
        let y = net.eval(&DVector::from_row_slice(&x)).unwrap();
        assert!((y[0] - out[0]).abs() < 1e-15 && (y[1] - out[1]).abs() < 1e-15);
    }
}
