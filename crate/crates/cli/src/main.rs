//! `trawlsim`: configuration-driven runs of the integrated trawl toolkit.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trawlsim_core::error::Error;

#[derive(Parser, Debug)]
#[command(
    name = "trawlsim",
    version,
    about = "Integrated trawl processes: exponents, limits and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "TRAWLSIM_THREADS")]
    pub threads: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Ensemble file format: csv or bin.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// Overwrite existing results.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Classify the regime and report the norming.
    Classify,
    /// Integrated exponent I(T) over `T_grid` against its limit.
    VerifyExponent,
    /// Simulate Y_T on `simulation.times`.
    Simulate,
    /// Simulate the dependent-increment limit process.
    LimitProcess,
    /// Run an estimator on an ensemble file.
    Estimate {
        /// Ensemble file; overrides `estimate.input`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Emit the sample-path panels and convergence tables used for plotting.
    FiguresData,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Unclassified(String),
    Accuracy(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Unclassified(_) => 3,
            CliError::Accuracy(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Unclassified(m) | CliError::Accuracy(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Accuracy { .. } => CliError::Accuracy(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
