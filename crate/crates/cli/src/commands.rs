//! Subcommands. Exit codes: 0 safe (or trajectory stayed), 1 unsafe (or
//! trajectory left), 2 any error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use pwacert_core::invariance::{InvarianceError, Verification};
use pwacert_core::oracle::{simulate, ExitEvent, OracleError, SimOptions, Trajectory};

use crate::bench::{run_bench, BenchError, BenchSpec, Mode};
use crate::plot::{render_svg, PlotError};
use crate::problem::{load_problem, LoadError, Problem, ProblemOptions};
use crate::report::Report;

pub const EXIT_SAFE: u8 = 0;
pub const EXIT_UNSAFE: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Load(#[from] LoadError),
    #[error("verification failed: {0}")]
    Verify(#[from] InvarianceError),
    #[error("plot: {0}")]
    Plot(#[from] PlotError),
    #[error("bench: {0}")]
    Bench(#[from] BenchError),
    #[error("simulation: {0}")]
    Simulate(#[from] OracleError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "pwacert", version, about = "Safety verification of piecewise-affine neural-network controllers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check positive invariance of the safe set minus the obstacles.
    Verify(VerifyArgs),
    /// Scaling benchmark over seeded random controllers.
    Bench(BenchArgs),
    /// Integrate one closed-loop trajectory.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub problem: PathBuf,
    /// Keep only regions touching the boundary (default unless the file says otherwise).
    #[arg(long, overrides_with = "no_prune")]
    pub prune: bool,
    #[arg(long, overrides_with = "prune")]
    pub no_prune: bool,
    /// Stop at the first violated vertex.
    #[arg(long)]
    pub early_exit: bool,
    /// Write an SVG of the regions (planar problems only).
    #[arg(long, value_name = "OUT")]
    pub plot: Option<PathBuf>,
    /// Write the JSON report.
    #[arg(long, value_name = "OUT")]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub spec: PathBuf,
    /// Write the table as JSON.
    #[arg(long, value_name = "OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub problem: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x0: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Keep every k-th step in the output.
    #[arg(long, default_value_t = 100)]
    pub record_every: usize,
    /// Write the trajectory as CSV instead of printing it.
    #[arg(long, value_name = "OUT")]
    pub out: Option<PathBuf>,
}

/// Command-line overrides on top of the problem file's options.
#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyFlags {
    pub prune: Option<bool>,
    pub early_exit: bool,
    pub seed: Option<u64>,
}

impl VerifyFlags {
    pub fn apply(&self, base: &ProblemOptions) -> ProblemOptions {
        ProblemOptions {
            prune: self.prune.unwrap_or(base.prune),
            early_exit: self.early_exit || base.early_exit,
            seed: self.seed.unwrap_or(base.seed),
            ..*base
        }
    }
}

pub struct VerifyOutcome {
    pub report: Report,
    pub verification: Verification,
    pub options: ProblemOptions,
}

/// Segments, builds the boundary pieces and checks every vertex.
pub fn run_verify(problem: &Problem, flags: &VerifyFlags, source: Option<String>) -> Result<VerifyOutcome, CliError> {
    let options = flags.apply(&problem.options);
    let verification = problem.safety.verify_detailed(&options.verify_options())?;
    let report = Report::new(problem, &options, &verification.verdict, source);
    Ok(VerifyOutcome {
        report,
        verification,
        options,
    })
}

pub fn plot_outcome(problem: &Problem, outcome: &VerifyOutcome) -> Result<String, PlotError> {
    render_svg(
        &problem.safety.safe,
        &problem.safety.obstacles,
        &outcome.verification.segmentation.regions,
        Some(&outcome.verification.verdict),
    )
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn verify_command(args: &VerifyArgs) -> Result<u8, CliError> {
    let problem = load_problem(&args.problem)?;
    let flags = VerifyFlags {
        prune: if args.prune {
            Some(true)
        } else if args.no_prune {
            Some(false)
        } else {
            None
        },
        early_exit: args.early_exit,
        seed: args.seed,
    };
    let outcome = run_verify(&problem, &flags, Some(args.problem.display().to_string()))?;
    if let Some(path) = &args.plot {
        write_file(path, &plot_outcome(&problem, &outcome)?)?;
    }
    if let Some(path) = &args.report {
        write_file(path, &outcome.report.to_json())?;
    }
    if args.json {
        println!("{}", outcome.report.to_json());
    } else {
        print!("{}", outcome.report.render_text());
    }
    Ok(if outcome.report.safe { EXIT_SAFE } else { EXIT_UNSAFE })
}

fn bench_command(args: &BenchArgs) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(&args.spec).map_err(|source| CliError::Io {
        path: args.spec.clone(),
        source,
    })?;
    let spec = BenchSpec::parse(&text)?;
    let table = run_bench(args.mode, &spec)?;
    if let Some(path) = &args.out {
        write_file(path, &serde_json::to_string_pretty(&table).expect("plain data"))?;
    }
    print!("{}", table.render());
    Ok(EXIT_SAFE)
}

pub fn trajectory_csv(t: &Trajectory) -> String {
    let mut out = String::from("t");
    for k in 0..t.states.first().map_or(0, |s| s.len()) {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    for (time, x) in t.times.iter().zip(&t.states) {
        let _ = write!(out, "{time}");
        for v in x.iter() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn simulate_command(args: &SimulateArgs) -> Result<u8, CliError> {
    let problem = load_problem(&args.problem)?;
    if args.x0.len() != problem.n_states() {
        return Err(CliError::Usage(format!(
            "--x0 has {} entries, the system has {} states",
            args.x0.len(),
            problem.n_states()
        )));
    }
    let p = &problem.safety;
    let opts = SimOptions {
        horizon: args.horizon,
        step: args.step,
        record_every: args.record_every,
        ..SimOptions::default()
    };
    let x0 = DVector::from_vec(args.x0.clone());
    let t = simulate(&p.system, &p.network, &x0, &p.safe, &p.obstacles, &opts)?;
    let csv = trajectory_csv(&t);
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    match t.exit_event {
        None => {
            eprintln!("stayed in the safe set up to t = {}", args.horizon);
            Ok(EXIT_SAFE)
        }
        Some(ExitEvent::LeftSafeSet { time, face, .. }) => {
            eprintln!("left the safe set through row {face} at t = {time}");
            Ok(EXIT_UNSAFE)
        }
        Some(ExitEvent::EnteredObstacle { time, obstacle, .. }) => {
            eprintln!("entered obstacle {obstacle} at t = {time}");
            Ok(EXIT_UNSAFE)
        }
    }
}

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Verify(a) => verify_command(a),
        Command::Bench(a) => bench_command(a),
        Command::Simulate(a) => simulate_command(a),
    }
}

pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_SAFE });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
