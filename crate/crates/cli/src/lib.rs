//! Command-line driver: configuration loading, one command per experiment,
//! and CSV output.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod table;

pub use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<jcmsim_core::Error> for CliError {
    fn from(e: jcmsim_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "jcmsim",
    version,
    about = "Noisy Jaynes-Cummings gate simulations"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "JCMSIM_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration, or a CSV previously written by this tool.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ensemble average over noisy trajectories.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Log-log line fits of 1 - F against t/T.
    Fit {
        /// Ensemble CSV; repeat for several fits.
        #[arg(long = "input", short, required = true)]
        inputs: Vec<PathBuf>,
        /// Row labels, one per input (default: file stem).
        #[arg(long = "label")]
        labels: Vec<String>,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        /// Weight points by their standard errors.
        #[arg(long)]
        weighted: bool,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Moments and histogram of the random-walk field.
    NoiseStats {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of evenly spaced checkpoints up to N.
        #[arg(long, default_value_t = 10)]
        checkpoints: u64,
        #[arg(long, short)]
        output: PathBuf,
        /// Also write a histogram against the Gaussian limit.
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// Step of the histogram (default: N).
        #[arg(long = "histogram-step")]
        histogram_step: Option<u64>,
    },
    /// F(T) over a grid of jump probabilities and field steps.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated p values (default: 13 values over [0, 0.3]).
        #[arg(long = "p-list", value_delimiter = ',')]
        p_list: Option<Vec<f64>>,
        /// Comma-separated delta_e values (default: 11 values over [0, 100]).
        #[arg(long = "delta-e-list", value_delimiter = ',')]
        delta_e_list: Option<Vec<f64>>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Simulated early-time fidelity loss against the perturbative law.
    PerturbCompare {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Final-time observables for increasing sample counts.
    Convergence {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated sample counts.
        #[arg(long = "samples-list", value_delimiter = ',', required = true)]
        samples_list: Vec<u64>,
        #[arg(long, short)]
        output: PathBuf,
    },
}

/// Runs a parsed command line and returns the text summary for stdout.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?
            .install(|| commands::dispatch(cli.command)),
        None => commands::dispatch(cli.command),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with_args<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(cli)
}
