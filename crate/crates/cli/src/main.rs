//! `plpde`: solve, probe and verify partial-Laplacian equations from JSON
//! run configurations.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_STALLED: u8 = 2;
pub const EXIT_FAILED_CONDITION: u8 = 3;

const EXIT_CODES: &str = "\
Exit codes:
  0  success (solve converged, rank condition passes, estimates stable)
  1  configuration or input error; the message names the offending field
  2  Newton or homotopy stall (partial outputs written), inconclusive rank
     probe, or unstable or non-finite estimate ratios
  3  the rank condition fails

Environment:
  PLPDE_THREADS  number of worker threads (default: all cores)
  RUST_LOG       diagnostic verbosity (default: warn)

Diagnostics go to standard error as one JSON object per line.";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] plpde_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use plpde_core::Error as E;
        match self {
            CliError::Core(E::NewtonStall { .. } | E::HomotopyStall { .. } | E::LinearSolveFailure(_))
            | CliError::Core(E::ProbeInconclusive(_)) => EXIT_STALLED,
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Parser)]
#[command(name = "plpde", version, about, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write fields, solve and estimate reports.
    Solve { config: PathBuf },
    /// Certify the tangent-cone rank condition of the configured operator.
    ProbeCone { config: PathBuf },
    /// Measure estimate ratios on the solutions stored in a directory.
    VerifyEstimates {
        solution_dir: PathBuf,
        /// Ball centre in real coordinates; defaults to the domain centre.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        center: Option<Vec<f64>>,
        /// Ball radius; defaults to a quarter of the period or interval.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Run a manufactured-solution refinement study.
    Mms { config: PathBuf },
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .init();
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("PLPDE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("PLPDE_THREADS must be a positive integer, found {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("PLPDE_THREADS: {e}")))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    init_threads()?;
    match cli.command {
        Command::Solve { config } => commands::solve(&config),
        Command::ProbeCone { config } => commands::probe_cone(&config),
        Command::VerifyEstimates {
            solution_dir,
            center,
            radius,
        } => commands::verify_estimates(&solution_dir, center, radius),
        Command::Mms { config } => commands::mms(&config),
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
