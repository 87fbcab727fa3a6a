//! Scaling benchmarks over seeded random controllers.
//!
//! Architectures use the `n_in x W^k x n_out` notation: `2x16^2x2` is two
//! hidden layers of 16 neurons. Plain `2x16x8x2` lists every layer.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use pwacert_core::fixtures::random_network;
use pwacert_core::geometry::HPolytope;
use pwacert_core::pwa_nn::Network;
use pwacert_core::{LinearSystem, SafetyProblem, VerifyOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::problem::{ActivationDoc, LoadError};

pub const BENCH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("architecture `{text}`: {detail}")]
    Architecture { text: String, detail: String },
    #[error("{0}")]
    Spec(#[from] LoadError),
    #[error("{mode} mode: {detail}")]
    Unsupported { mode: Mode, detail: String },
    #[error("{0}")]
    Verify(#[from] pwacert_core::invariance::InvarianceError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub n_in: usize,
    pub hidden: Vec<usize>,
    pub n_out: usize,
}

impl Architecture {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.n_in);
        w.extend_from_slice(&self.hidden);
        w.push(self.n_out);
        w
    }

    pub fn hidden_neurons(&self) -> usize {
        self.hidden.iter().sum()
    }

    /// Weights and biases: `Σ_l n_l (n_{l-1} + 1)`.
    pub fn parameters(&self) -> usize {
        self.widths().windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn of_network(net: &Network) -> Self {
        let layers = net.layers();
        Self {
            n_in: net.n_in(),
            hidden: layers[..layers.len() - 1].iter().map(|l| l.n_out()).collect(),
            n_out: net.n_out(),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.n_in)?;
        let mut i = 0;
        while i < self.hidden.len() {
            let w = self.hidden[i];
            let run = self.hidden[i..].iter().take_while(|&&v| v == w).count();
            if run > 1 {
                write!(f, "x{w}^{run}")?;
            } else {
                write!(f, "x{w}")?;
            }
            i += run;
        }
        write!(f, "x{}", self.n_out)
    }
}

impl FromStr for Architecture {
    type Err = BenchError;

    /// Accepts `x` or `×` as separator and `W^k`, `W^(k)` for repeats.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |detail: &str| BenchError::Architecture {
            text: text.to_string(),
            detail: detail.to_string(),
        };
        let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let tokens: Vec<&str> = cleaned.split(['x', '×']).collect();
        if tokens.len() < 2 {
            return Err(err("need at least input and output widths"));
        }
        let int = |t: &str| -> Result<usize, BenchError> {
            match t.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(err(&format!("`{t}` is not a positive integer"))),
            }
        };
        let n_in = int(tokens[0])?;
        let n_out = int(tokens[tokens.len() - 1])?;
        let mut hidden = vec![];
        for t in &tokens[1..tokens.len() - 1] {
            match t.split_once('^') {
                Some((w, k)) => {
                    let k = k.trim_start_matches('(').trim_end_matches(')');
                    let (w, k) = (int(w)?, int(k)?);
                    hidden.extend(std::iter::repeat_n(w, k));
                }
                None => hidden.push(int(t)?),
            }
        }
        Ok(Self { n_in, hidden, n_out })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Width,
    Depth,
    Dimension,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Width => "width",
            Mode::Depth => "depth",
            Mode::Dimension => "dimension",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub format_version: u32,
    pub seed: u64,
    pub architectures: Vec<String>,
    #[serde(default = "default_activation")]
    pub activation: ActivationDoc,
    /// Standard deviation of the random biases.
    #[serde(default = "default_bias_std")]
    pub bias_std: f64,
    #[serde(default = "default_true")]
    pub prune: bool,
    /// `t_v` is the fastest of this many runs.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_activation() -> ActivationDoc {
    ActivationDoc::Named("relu".into())
}
fn default_bias_std() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_repeats() -> usize {
    1
}

impl BenchSpec {
    pub fn new(seed: u64, architectures: &[&str]) -> Self {
        Self {
            format_version: BENCH_FORMAT_VERSION,
            seed,
            architectures: architectures.iter().map(|s| s.to_string()).collect(),
            activation: default_activation(),
            bias_std: default_bias_std(),
            prune: true,
            repeats: 1,
        }
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let at = e.path().to_string();
            let inner = e.into_inner();
            LoadError::Parse {
                at,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        if spec.format_version != BENCH_FORMAT_VERSION {
            return Err(LoadError::UnsupportedVersion {
                found: spec.format_version,
            }
            .into());
        }
        Ok(spec)
    }
}

/// Planar integrator `ẋ = u` on `[-5, 5]²`.
pub fn integrator_plant() -> (LinearSystem, HPolytope) {
    let sys = LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).expect("square");
    (sys, HPolytope::from_box(&[-5.0, -5.0], &[5.0, 5.0]))
}

/// Chain of `wagons` unit masses with springs `k = 1` and dampers `c = 0.5`,
/// state `(z, ż)`, one force per wagon. The safe set is
/// `0 ≤ z_i ≤ 1, |ż_i| ≤ z_i`.
pub fn spring_mass_damper(wagons: usize) -> (LinearSystem, HPolytope) {
    let n = wagons;
    let chain = |k: f64| {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            // Wagon i is tied to the wall (i = 0) or to wagon i-1, and to wagon i+1.
            m[(i, i)] = if i + 1 < n { 2.0 * k } else { k };
            if i + 1 < n {
                m[(i, i + 1)] = -k;
                m[(i + 1, i)] = -k;
            }
        }
        m
    };
    let (k, c) = (chain(1.0), chain(0.5));
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    a.view_mut((n, 0), (n, n)).copy_from(&(-k));
    a.view_mut((n, n), (n, n)).copy_from(&(-c));
    let mut b = DMatrix::zeros(2 * n, n);
    b.view_mut((n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    let sys = LinearSystem::new(a, b).expect("block shapes");

    let mut rows = vec![];
    for i in 0..n {
        let mut z = vec![0.0; 2 * n];
        z[i] = 1.0;
        rows.push((z, 1.0));
        let mut up = vec![0.0; 2 * n];
        up[i] = -1.0;
        up[n + i] = 1.0;
        rows.push((up, 0.0));
        let mut down = vec![0.0; 2 * n];
        down[i] = -1.0;
        down[n + i] = -1.0;
        rows.push((down, 0.0));
    }
    let safe = HPolytope::from_rows(2 * n, &rows).expect("consistent rows");
    (sys, safe)
}

/// The benchmark problem for one architecture row.
pub fn bench_problem(mode: Mode, arch: &Architecture, spec: &BenchSpec) -> Result<SafetyProblem, BenchError> {
    let (system, safe) = match mode {
        Mode::Width | Mode::Depth => {
            if arch.n_in != 2 || arch.n_out != 2 {
                return Err(BenchError::Unsupported {
                    mode,
                    detail: format!("{arch}: the planar integrator needs 2 inputs and 2 outputs"),
                });
            }
            integrator_plant()
        }
        Mode::Dimension => {
            if arch.n_in != 2 * arch.n_out {
                return Err(BenchError::Unsupported {
                    mode,
                    detail: format!("{arch}: a chain of k wagons has 2k states and k forces"),
                });
            }
            spring_mass_damper(arch.n_out)
        }
    };
    let act = spec.activation.to_activation("activation")?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let network = random_network(&mut rng, &arch.widths(), &act, spec.bias_std);
    Ok(SafetyProblem {
        system,
        network,
        safe,
        obstacles: vec![],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub architecture: String,
    /// `#N`
    pub hidden_neurons: usize,
    /// `#θ`
    pub parameters: usize,
    /// `#R`
    pub regions: usize,
    /// `t_v` in seconds.
    pub verify_seconds: f64,
    pub safe: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub format_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

pub fn run_bench(mode: Mode, spec: &BenchSpec) -> Result<BenchTable, BenchError> {
    let archs: Vec<Architecture> = spec.architectures.iter().map(|a| a.parse()).collect::<Result<_, _>>()?;
    let options = VerifyOptions {
        prune: spec.prune,
        seed: spec.seed,
        ..VerifyOptions::default()
    };
    let mut rows = Vec::with_capacity(archs.len());
    for arch in &archs {
        let problem = bench_problem(mode, arch, spec)?;
        let mut best = f64::INFINITY;
        let mut verdict = None;
        for _ in 0..spec.repeats.max(1) {
            let v = problem.verify(&options)?;
            best = best.min(v.timings.total.as_secs_f64());
            verdict = Some(v);
        }
        let v = verdict.expect("at least one run");
        rows.push(BenchRow {
            architecture: arch.to_string(),
            hidden_neurons: arch.hidden_neurons(),
            parameters: arch.parameters(),
            regions: v.stats.regions,
            verify_seconds: best,
            safe: v.safe,
        });
    }
    Ok(BenchTable {
        format_version: BENCH_FORMAT_VERSION,
        mode,
        seed: spec.seed,
        rows,
    })
}

impl BenchTable {
    /// Plain-text table with the `#N, #θ, #R, t_v` columns.
    pub fn render(&self) -> String {
        let title = match self.mode {
            Mode::Width => "Scalability w.r.t. the network's width",
            Mode::Depth => "Scalability w.r.t. the network's depth",
            Mode::Dimension => "Scalability w.r.t. the system's dimension",
        };
        let mut out = format!("{title} (seed {})\n", self.seed);
        out += &format!(
            "{:<16} {:>6} {:>8} {:>8} {:>10} {:>6}\n",
            "Architecture", "#N", "#θ", "#R", "t_v [s]", "safe"
        );
        for r in &self.rows {
            out += &format!(
                "{:<16} {:>6} {:>8} {:>8} {:>10.3} {:>6}\n",
                r.architecture, r.hidden_neurons, r.parameters, r.regions, r.verify_seconds, r.safe
            );
        }
        out
    }
}

