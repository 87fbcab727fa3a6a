//! Problem files: a versioned JSON document with explicit row-major matrices.
//!
//! Structural errors carry the JSON path and the line/column reported by the
//! parser. Semantic errors (dimension chains, discontinuous activations,
//! obstacles leaving the safe set) carry the JSON path of the offending item.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use pwacert_core::geometry::HPolytope;
use pwacert_core::pwa_nn::{Layer, Network, NetworkError, PwaActivation};
use pwacert_core::{LinearSystem, SafetyProblem, Tolerances, VerifyOptions, DEFAULT_TOL};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at `{at}` (line {line}, column {column}): {message}")]
    Parse {
        at: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format_version {found} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("{at}: dimension mismatch: {detail}")]
    DimensionMismatch { at: String, detail: String },
    #[error("{at}: activation is discontinuous at breakpoint {breakpoint}: left {left}, right {right}")]
    NonContinuousActivation {
        at: String,
        breakpoint: f64,
        left: f64,
        right: f64,
    },
    #[error("{at}: {detail}")]
    Invalid { at: String, detail: String },
    #[error("obstacles[{index}] is not contained in the safe set")]
    ObstacleOutsideSafeSet { index: usize },
}

fn mismatch(at: impl Into<String>, detail: impl Into<String>) -> LoadError {
    LoadError::DimensionMismatch {
        at: at.into(),
        detail: detail.into(),
    }
}

fn invalid(at: impl Into<String>, detail: impl Into<String>) -> LoadError {
    LoadError::Invalid {
        at: at.into(),
        detail: detail.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub format_version: u32,
    pub system: SystemDoc,
    pub network: NetworkDoc,
    pub safe_set: PolytopeDoc,
    #[serde(default)]
    pub obstacles: Vec<ObstacleDoc>,
    #[serde(default)]
    pub options: OptionsDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub layers: Vec<LayerDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub activation: ActivationDoc,
}

/// `"identity"`, `"relu"`, `"hard_tanh"`, `"leaky_relu:α"` or the explicit
/// breakpoint/slope/intercept lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActivationDoc {
    Named(String),
    Explicit {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
        intercepts: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeDoc {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleDoc {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    /// Open obstacles may be touched but not entered.
    #[serde(default = "default_open")]
    pub open: bool,
}

fn default_open() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<TolerancesDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_exit: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesDoc {
    #[serde(default = "tol_lp")]
    pub lp: f64,
    #[serde(default = "tol_face")]
    pub face: f64,
    #[serde(default = "tol_radius")]
    pub radius: f64,
    #[serde(default = "tol_margin")]
    pub margin: f64,
}

fn tol_lp() -> f64 {
    DEFAULT_TOL.lp
}
fn tol_face() -> f64 {
    DEFAULT_TOL.face
}
fn tol_radius() -> f64 {
    DEFAULT_TOL.radius
}
fn tol_margin() -> f64 {
    DEFAULT_TOL.margin
}

impl From<Tolerances> for TolerancesDoc {
    fn from(t: Tolerances) -> Self {
        Self {
            lp: t.lp,
            face: t.face,
            radius: t.radius,
            margin: t.margin,
        }
    }
}

impl From<TolerancesDoc> for Tolerances {
    fn from(t: TolerancesDoc) -> Self {
        Self {
            lp: t.lp,
            face: t.face,
            radius: t.radius,
            margin: t.margin,
        }
    }
}

/// Run settings stored alongside the problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemOptions {
    pub tolerances: Tolerances,
    pub prune: bool,
    pub early_exit: bool,
    pub seed: u64,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        let v = VerifyOptions::default();
        Self {
            tolerances: v.tolerances,
            prune: v.prune,
            early_exit: v.early_exit,
            seed: v.seed,
        }
    }
}

impl ProblemOptions {
    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            prune: self.prune,
            early_exit: self.early_exit,
            tolerances: self.tolerances,
            seed: self.seed,
            ..VerifyOptions::default()
        }
    }
}

/// A validated problem ready for verification.
#[derive(Clone, Debug)]
pub struct Problem {
    pub safety: SafetyProblem,
    pub options: ProblemOptions,
}

impl Problem {
    pub fn n_states(&self) -> usize {
        self.safety.system.n_states()
    }

    pub fn n_inputs(&self) -> usize {
        self.safety.system.n_inputs()
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<Problem, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_problem(&text)
}

pub fn parse_problem(text: &str) -> Result<Problem, LoadError> {
    parse_document(text)?.into_problem()
}

/// Parses without semantic validation; `format_version` is checked first so
/// that documents from a newer schema fail with a version error.
pub fn parse_document(text: &str) -> Result<ProblemDocument, LoadError> {
    #[derive(Deserialize)]
    struct Header {
        format_version: Option<u32>,
    }
    let header: Header = deserialize(text)?;
    match header.format_version {
        None => return Err(invalid("format_version", "missing field")),
        Some(FORMAT_VERSION) => {}
        Some(found) => return Err(LoadError::UnsupportedVersion { found }),
    }
    deserialize(text)
}

fn deserialize<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, LoadError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let at = e.path().to_string();
        let inner = e.into_inner();
        LoadError::Parse {
            at,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|inner| LoadError::Parse {
        at: ".".into(),
        line: inner.line(),
        column: inner.column(),
        message: inner.to_string(),
    })?;
    Ok(value)
}

fn matrix(at: &str, rows: &[Vec<f64>], cols: Option<usize>) -> Result<DMatrix<f64>, LoadError> {
    let width = match (rows.first(), cols) {
        (Some(r), _) => r.len(),
        (None, Some(c)) => c,
        (None, None) => return Err(invalid(at, "matrix has no rows")),
    };
    if let Some(c) = cols {
        if width != c {
            return Err(mismatch(at, format!("expected {c} columns, found {width}")));
        }
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(mismatch(
                format!("{at}[{i}]"),
                format!("row has {} entries, row 0 has {width}", r.len()),
            ));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("{at}[{i}][{j}]"), "entry is not finite"));
        }
    }
    if width == 0 {
        return Err(invalid(at, "matrix has no columns"));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

impl ActivationDoc {
    pub fn to_activation(&self, at: &str) -> Result<PwaActivation, LoadError> {
        match self {
            ActivationDoc::Named(name) => {
                let name = name.trim();
                match name {
                    "identity" | "linear" => Ok(PwaActivation::identity()),
                    "relu" => Ok(PwaActivation::relu()),
                    "hard_tanh" => Ok(PwaActivation::hard_tanh()),
                    _ => match name.strip_prefix("leaky_relu:") {
                        Some(alpha) => alpha
                            .trim()
                            .parse::<f64>()
                            .ok()
                            .filter(|a| a.is_finite())
                            .map(PwaActivation::leaky_relu)
                            .ok_or_else(|| invalid(at, format!("bad leaky_relu slope `{alpha}`"))),
                        None => Err(invalid(at, format!("unknown activation `{name}`"))),
                    },
                }
            }
            ActivationDoc::Explicit {
                breakpoints,
                slopes,
                intercepts,
            } => PwaActivation::new(breakpoints.clone(), slopes.clone(), intercepts.clone()).map_err(|e| match e {
                NetworkError::NonContinuousActivation { breakpoint, left, right } => {
                    LoadError::NonContinuousActivation {
                        at: at.to_string(),
                        breakpoint,
                        left,
                        right,
                    }
                }
                other => invalid(at, other.to_string()),
            }),
        }
    }

    /// Shorthand when the activation is one of the named ones.
    pub fn from_activation(act: &PwaActivation) -> Self {
        if act.is_identity() {
            return ActivationDoc::Named("identity".into());
        }
        if *act == PwaActivation::relu() {
            return ActivationDoc::Named("relu".into());
        }
        if *act == PwaActivation::hard_tanh() {
            return ActivationDoc::Named("hard_tanh".into());
        }
        if act.breakpoints() == [0.0] && act.intercepts() == [0.0, 0.0] && act.slopes()[1] == 1.0 {
            return ActivationDoc::Named(format!("leaky_relu:{}", act.slopes()[0]));
        }
        ActivationDoc::Explicit {
            breakpoints: act.breakpoints().to_vec(),
            slopes: act.slopes().to_vec(),
            intercepts: act.intercepts().to_vec(),
        }
    }
}

fn polytope(at: &str, c: &[Vec<f64>], d: &[f64], n: usize) -> Result<HPolytope, LoadError> {
    let cm = matrix(&format!("{at}.C"), c, Some(n))?;
    if d.len() != cm.nrows() {
        return Err(mismatch(
            format!("{at}.d"),
            format!("C has {} rows but d has {} entries", cm.nrows(), d.len()),
        ));
    }
    if let Some(i) = d.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("{at}.d[{i}]"), "entry is not finite"));
    }
    HPolytope::new(cm, DVector::from_column_slice(d)).map_err(|e| invalid(at, e.to_string()))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().map(|v| v + 0.0).collect()).collect()
}

/// Like `to_string_pretty`, but arrays of scalars stay on one line.
pub fn write_compact(value: &serde_json::Value, indent: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |n: usize| "  ".repeat(n);
    match value {
        Value::Array(items) if items.iter().all(|v| !v.is_array() && !v.is_object()) => {
            let inner: Vec<String> = items.iter().map(|v| v.to_string()).collect();
            out.push('[');
            out.push_str(&inner.join(", "));
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, v) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_compact(v, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if !map.is_empty() => {
            out.push_str("{\n");
            for (i, (k, v)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_compact(v, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

impl ProblemDocument {
    pub fn into_problem(self) -> Result<Problem, LoadError> {
        if self.format_version != FORMAT_VERSION {
            return Err(LoadError::UnsupportedVersion {
                found: self.format_version,
            });
        }
        let a = matrix("system.A", &self.system.a, None)?;
        let n = a.nrows();
        if a.ncols() != n {
            return Err(mismatch("system.A", format!("expected a square matrix, found {n}x{}", a.ncols())));
        }
        let b = matrix("system.B", &self.system.b, None)?;
        if b.nrows() != n {
            return Err(mismatch("system.B", format!("expected {n} rows, found {}", b.nrows())));
        }
        let system = LinearSystem::new(a, b).map_err(|e| mismatch("system", e.to_string()))?;

        if self.network.layers.is_empty() {
            return Err(invalid("network.layers", "network has no layers"));
        }
        let mut width = n;
        let mut layers = Vec::with_capacity(self.network.layers.len());
        for (l, doc) in self.network.layers.iter().enumerate() {
            let at = format!("network.layers[{l}]");
            let w = matrix(&format!("{at}.W"), &doc.w, Some(width))?;
            if doc.b.len() != w.nrows() {
                return Err(mismatch(
                    at,
                    format!("W has {} rows but b has {} entries", w.nrows(), doc.b.len()),
                ));
            }
            if let Some(i) = doc.b.iter().position(|v| !v.is_finite()) {
                return Err(invalid(format!("{at}.b[{i}]"), "entry is not finite"));
            }
            let act = doc.activation.to_activation(&format!("{at}.activation"))?;
            width = w.nrows();
            layers.push(Layer::new(w, DVector::from_column_slice(&doc.b), act));
        }
        if width != system.n_inputs() {
            return Err(mismatch(
                format!("network.layers[{}]", layers.len() - 1),
                format!("network has {width} outputs, B has {} columns", system.n_inputs()),
            ));
        }
        let network = Network::new(layers).map_err(|e| match e {
            NetworkError::DimensionMismatch { layer, detail } => mismatch(format!("network.layers[{layer}]"), detail),
            other => invalid("network", other.to_string()),
        })?;

        let safe = polytope("safe_set", &self.safe_set.c, &self.safe_set.d, n)?;
        let mut obstacles = Vec::with_capacity(self.obstacles.len());
        for (k, o) in self.obstacles.iter().enumerate() {
            obstacles.push(polytope(&format!("obstacles[{k}]"), &o.c, &o.d, n)?.with_open(o.open));
        }

        let opts = self.options;
        let defaults = ProblemOptions::default();
        let options = ProblemOptions {
            tolerances: opts.tolerances.map(Tolerances::from).unwrap_or(defaults.tolerances),
            prune: opts.prune.unwrap_or(defaults.prune),
            early_exit: opts.early_exit.unwrap_or(defaults.early_exit),
            seed: opts.seed.unwrap_or(defaults.seed),
        };
        for (k, o) in obstacles.iter().enumerate() {
            let inside = safe
                .contains_polytope(o, options.tolerances.face)
                .map_err(|e| invalid(format!("obstacles[{k}]"), e.to_string()))?;
            if !inside {
                return Err(LoadError::ObstacleOutsideSafeSet { index: k });
            }
        }

        Ok(Problem {
            safety: SafetyProblem {
                system,
                network,
                safe,
                obstacles,
            },
            options,
        })
    }

    pub fn from_problem(problem: &SafetyProblem, options: &ProblemOptions) -> Self {
        let layers = problem
            .network
            .layers()
            .iter()
            .map(|l| LayerDoc {
                w: rows_of(&l.weights),
                b: l.bias.iter().map(|v| v + 0.0).collect(),
                activation: ActivationDoc::from_activation(&l.activation),
            })
            .collect();
        let defaults = ProblemOptions::default();
        Self {
            format_version: FORMAT_VERSION,
            system: SystemDoc {
                a: rows_of(&problem.system.a),
                b: rows_of(&problem.system.b),
            },
            network: NetworkDoc { layers },
            safe_set: PolytopeDoc {
                c: rows_of(problem.safe.a()),
                d: problem.safe.b().iter().map(|v| v + 0.0).collect(),
            },
            obstacles: problem
                .obstacles
                .iter()
                .map(|o| ObstacleDoc {
                    c: rows_of(o.a()),
                    d: o.b().iter().map(|v| v + 0.0).collect(),
                    open: o.is_open(),
                })
                .collect(),
            options: OptionsDoc {
                tolerances: (options.tolerances != defaults.tolerances).then(|| options.tolerances.into()),
                prune: Some(options.prune),
                early_exit: Some(options.early_exit),
                seed: Some(options.seed),
            },
        }
    }

    /// Pretty JSON with each numeric row on one line.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("documents are plain data");
        let mut out = String::new();
        write_compact(&value, 0, &mut out);
        out
    }
}

impl fmt::Display for ProblemDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}
