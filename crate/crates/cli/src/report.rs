//! Verification reports: one JSON document plus a text rendering of it.

use pwacert_core::invariance::{CheckStatus, PieceKind, VertexCheck};
use pwacert_core::Verdict;
use serde::{Deserialize, Serialize};

use crate::bench::Architecture;
use crate::problem::{Problem, ProblemOptions, TolerancesDoc};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub tool: ToolInfo,
    pub seed: u64,
    pub problem: ProblemSummary,
    pub options: ReportOptions,
    pub safe: bool,
    pub region_count: usize,
    pub piece_count: usize,
    pub vertex_count: usize,
    pub marginal_count: usize,
    pub violation_count: usize,
    pub violations: Vec<VertexRecord>,
    pub marginal: Vec<VertexRecord>,
    pub wall_times: WallTimes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub n_states: usize,
    pub n_inputs: usize,
    pub architecture: String,
    pub hidden_neurons: usize,
    pub parameters: usize,
    pub hyperplanes: usize,
    pub obstacles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub prune: bool,
    pub early_exit: bool,
    pub tolerances: TolerancesDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    /// `"outer"` or `"obstacle"`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<usize>,
    pub face_row: usize,
    pub region_id: usize,
    pub vertex: Vec<f64>,
    pub margin: f64,
}

impl From<&VertexCheck> for VertexRecord {
    fn from(c: &VertexCheck) -> Self {
        let (kind, obstacle) = match c.kind {
            PieceKind::Outer => ("outer", None),
            PieceKind::Obstacle(k) => ("obstacle", Some(k)),
        };
        Self {
            kind: kind.into(),
            obstacle,
            face_row: c.face_row,
            region_id: c.region_id,
            vertex: c.vertex.iter().copied().collect(),
            margin: c.margin,
        }
    }
}

/// Seconds per phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub segmentation: f64,
    pub pieces: f64,
    pub checks: f64,
    pub total: f64,
}

impl Report {
    pub fn new(problem: &Problem, options: &ProblemOptions, verdict: &Verdict, source: Option<String>) -> Self {
        let net = &problem.safety.network;
        let arch = Architecture::of_network(net);
        let marginal: Vec<VertexRecord> = verdict
            .checks
            .iter()
            .filter(|c| c.status == CheckStatus::Marginal)
            .map(VertexRecord::from)
            .collect();
        let t = &verdict.timings;
        Self {
            format_version: REPORT_FORMAT_VERSION,
            tool: ToolInfo {
                name: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
            },
            seed: options.seed,
            problem: ProblemSummary {
                source,
                n_states: problem.n_states(),
                n_inputs: problem.n_inputs(),
                architecture: arch.to_string(),
                hidden_neurons: net.n_hidden_neurons(),
                parameters: net.n_parameters(),
                hyperplanes: net.n_hyperplanes(),
                obstacles: problem.safety.obstacles.len(),
            },
            options: ReportOptions {
                prune: options.prune,
                early_exit: options.early_exit,
                tolerances: options.tolerances.into(),
            },
            safe: verdict.safe,
            region_count: verdict.stats.regions,
            piece_count: verdict.stats.pieces,
            vertex_count: verdict.stats.vertices,
            marginal_count: verdict.stats.marginal,
            violation_count: verdict.stats.violations,
            violations: verdict.violations.iter().map(VertexRecord::from).collect(),
            marginal,
            wall_times: WallTimes {
                segmentation: t.segmentation.as_secs_f64(),
                pieces: t.pieces.as_secs_f64(),
                checks: t.checks.as_secs_f64(),
                total: t.total.as_secs_f64(),
            },
        }
    }

    /// The same report with every wall time zeroed.
    pub fn without_timings(&self) -> Self {
        Self {
            wall_times: WallTimes::default(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports are plain data")
    }

    pub fn render_text(&self) -> String {
        let p = &self.problem;
        let mut out = String::new();
        out += &format!(
            "problem: {} states, {} inputs, network {} ({} hidden neurons, {} parameters)\n",
            p.n_states, p.n_inputs, p.architecture, p.hidden_neurons, p.parameters
        );
        out += &format!(
            "regions: {}  pieces: {}  vertices: {}  marginal: {}  violations: {}\n",
            self.region_count, self.piece_count, self.vertex_count, self.marginal_count, self.violation_count
        );
        let w = &self.wall_times;
        out += &format!(
            "time: segmentation {:.3}s, pieces {:.3}s, checks {:.3}s, total {:.3}s\n",
            w.segmentation, w.pieces, w.checks, w.total
        );
        for v in &self.violations {
            out += &format!("  violation: {}\n", describe(v));
        }
        out += if self.safe { "verdict: SAFE\n" } else { "verdict: UNSAFE\n" };
        out
    }
}

fn describe(v: &VertexRecord) -> String {
    let face = match v.obstacle {
        Some(k) => format!("obstacle {k} row {}", v.face_row),
        None => format!("outer row {}", v.face_row),
    };
    let coords: Vec<String> = v.vertex.iter().map(|x| format!("{x:.6}")).collect();
    format!(
        "{face}, region {}, vertex ({}), margin {:.3e}",
        v.region_id,
        coords.join(", "),
        v.margin
    )
}
