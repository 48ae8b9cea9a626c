mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use horizon_core::cauchy::CauchyError;
use horizon_core::csvfmt::CsvError;
use horizon_core::pmp::PmpError;
use horizon_core::problem::ProblemError;
use horizon_core::transversality::TransversalityError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_NO_LIMIT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "horizon-pmp", version, about = "Infinite-horizon Pontryagin extremals and transversality diagnostics")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Problem definition (TOML).
    #[arg(long, global = true, conflicts_with = "builtin")]
    pub problem: Option<PathBuf>,
    /// Built-in benchmark problem (see `list`).
    #[arg(long, global = true)]
    pub builtin: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every randomized pool.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub atol: f64,
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub rtol: f64,
    /// Comma-separated increasing horizons.
    #[arg(long, global = true, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// Integration horizon for accumulated integrals.
    #[arg(long, global = true, default_value_t = 64.0)]
    pub tmax: f64,
    /// Tolerance of the convergence and transversality window tests.
    #[arg(long = "tol-conv", global = true, default_value_t = 1e-6)]
    pub tol_conv: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Truncation scheme over the horizons in --tau.
    Solve,
    /// Accumulated integral, convergence verdict and Cauchy adjoint.
    Adjoint(AdjointArgs),
    /// Transversality battery.
    Check(CheckArgs),
    /// Continuity probe and abnormality indicator.
    Sweep(SweepArgs),
    /// Built-in problems.
    List(ListArgs),
}

#[derive(Debug, Args)]
pub struct AdjointArgs {
    /// Use this cluster point when the integral oscillates.
    #[arg(long)]
    pub cluster: Option<usize>,
    /// Right end of the adjoint output span (default: automatic).
    #[arg(long = "t-out")]
    pub t_out: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Adjoint artifact (`psi_cauchy.csv` or `extremal_psi.csv`) instead of an inline Cauchy adjoint.
    #[arg(long)]
    pub psi: Option<PathBuf>,
    /// Use this cluster point when the integral oscillates.
    #[arg(long)]
    pub cluster: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated strictly decreasing probe radii.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
    pub radii: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ListArgs {
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: CsvError },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Pmp(#[from] PmpError),
    #[error(transparent)]
    Cauchy(#[from] CauchyError),
    #[error(transparent)]
    Transversality(#[from] TransversalityError),
    #[error("{0}")]
    Usage(String),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HORIZON_PMP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("HORIZON_PMP_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    match cli.command {
        Command::List(a) => commands::list(&a),
        Command::Solve => commands::solve(&cli.global),
        Command::Adjoint(a) => commands::adjoint(&cli.global, &a),
        Command::Check(a) => commands::check(&cli.global, &a),
        Command::Sweep(a) => commands::sweep(&cli.global, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
