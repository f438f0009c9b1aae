//! `lyapunov-oqs`: steady states, dynamics, two-time functions and currents
//! of quadratic open systems, written as CSV plus a JSON manifest.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lyapunov_oqs::lyapunov::Level;

mod commands;
mod config;
mod output;
mod validate;

use config::CliOverrides;

#[derive(Parser)]
#[command(name = "lyapunov-oqs", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady-state correlation matrix
    Ness(Common),
    /// C(t) on the configured time grid
    Dynamics(Common),
    /// C(t+τ, t) on the configured lag grid
    TwoTime(Common),
    /// Weak-coupling steady state in the eigenbasis, with regime margins
    PertNess(Common),
    /// Closed-form resonant level next to the Lyapunov results
    ResonantLevel(Common),
    /// Bond and bath currents of a chain
    ChainCurrent(Common),
    /// Dimensionless conductance W(r, s)
    Conductance(Common),
    /// Random instance checked against the oracles; prints a pass/fail table
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Approximation level; overrides the config file
    #[arg(long, value_enum)]
    level: Option<LevelArg>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add the naive regression baseline to two-time output
    #[arg(long)]
    with_naive: bool,
    /// Absolute and relative quadrature tolerance
    #[arg(long)]
    quad_tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    First,
    L1,
    L2,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::First => Level::FirstMarkov,
            LevelArg::L1 => Level::LevelI,
            LevelArg::L2 => Level::LevelII,
        }
    }
}

#[derive(Args, Clone)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "all")]
    level: ValidateLevel,
    /// Number of system sites
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write validate.csv here
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quad_tol: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValidateLevel {
    All,
    First,
    L1,
    L2,
}

/// An error on its way to an exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    pub diagnostics: Option<serde_json::Value>,
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: msg.into(),
            diagnostics: None,
        }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: msg.into(),
            diagnostics: None,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::numeric(format!("{}: {e}", path.display()))
    }
}

impl From<lyapunov_oqs::Error> for Failure {
    fn from(e: lyapunov_oqs::Error) -> Self {
        let mut f = if e.is_config() {
            Failure::config(e.to_string())
        } else {
            Failure::numeric(e.to_string())
        };
        f.diagnostics = Some(serde_json::json!({ "error": format!("{e:?}") }));
        f
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("LYAPOQS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("LYAPOQS_THREADS: expected a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::numeric(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let (name, common) = match cli.command {
        Command::Validate(a) => return validate::run(a.level, a.n, a.seed, a.out.as_deref(), a.quad_tol),
        Command::Ness(c) => ("ness", c),
        Command::Dynamics(c) => ("dynamics", c),
        Command::TwoTime(c) => ("two-time", c),
        Command::PertNess(c) => ("pert-ness", c),
        Command::ResonantLevel(c) => ("resonant-level", c),
        Command::ChainCurrent(c) => ("chain-current", c),
        Command::Conductance(c) => ("conductance", c),
    };
    let text = std::fs::read_to_string(&common.config).map_err(|e| Failure::config(format!("--config {}: {e}", common.config.display())))?;
    let cfg = config::parse_run_config(&text)?;
    let base = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let overrides = CliOverrides {
        level: common.level.map(Level::from),
        out: common.out.clone(),
        quad_tol: common.quad_tol,
        with_naive: common.with_naive,
    };
    let resolved = config::resolve(cfg, &base, &overrides)?;
    std::fs::create_dir_all(&resolved.out).map_err(|e| Failure::io(&resolved.out, e))?;
    output::write_manifest(name, &resolved)?;
    let result = commands::dispatch(name, &resolved);
    if let Err(f) = &result {
        // best effort: the payload goes next to the outputs
        let _ = output::write_failure(&resolved.out, name, f);
    }
    result
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
