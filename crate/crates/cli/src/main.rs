//! `brood`: generate synthetic data, run the sampler, and inspect results.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use brood::metrics::EdgeMode;
use brood::synth::ErrorModel;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Init;

#[derive(Debug)]
pub enum CliError {
    /// Bad input or configuration; exit code 2.
    Validation(String),
    /// Failure while running; exit code 3.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "brood",
    version,
    about = "Birth-death restricted order MCMC for DAG structure learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ChainFlags {
    /// Probability of a space move per step.
    #[arg(long)]
    pub ell: Option<f64>,
    /// Death calibration c* in (0, 1].
    #[arg(long)]
    pub cstar: Option<f64>,
    /// Maximum in-degree of the search space.
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Allow one parent outside the space when drawing DAGs.
    #[arg(long)]
    pub plus_one: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GraphName {
    Er,
    Sbm,
    Hsbm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ErrorName {
    Gaussian,
    Mixture,
    MixtureSd,
}

impl From<ErrorName> for ErrorModel {
    fn from(e: ErrorName) -> Self {
        match e {
            ErrorName::Gaussian => ErrorModel::Gaussian,
            ErrorName::Mixture => ErrorModel::Mixture,
            ErrorName::MixtureSd => ErrorModel::MixtureSd,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a graph and linear SEM data.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        p: Option<usize>,
        /// Sample size; defaults to 10p.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum)]
        graph: Option<GraphName>,
        #[arg(long, value_enum)]
        errors: Option<ErrorName>,
    },
    /// Run the sampler on a data set.
    Infer {
        #[command(flatten)]
        common: Common,
        /// CSV data with a header row.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Initial space: `pc` or `file:<path>` to a space JSON.
        #[arg(long)]
        init: Option<Init>,
        /// Independent chains on separate random streams.
        #[arg(long)]
        chains: Option<usize>,
        #[command(flatten)]
        chain: ChainFlags,
    },
    /// Exact error quantities for a small problem.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        init: Option<Init>,
        /// Also solve the exact joint kernel of the sampler (p <= 3).
        #[arg(long)]
        kernel: bool,
        #[command(flatten)]
        chain: ChainFlags,
    },
    /// Edge-recovery metrics of sampled DAGs against a true graph.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Trace files (JSON lines); samples are pooled.
        #[arg(long, required = true, num_args = 1..)]
        trace: Vec<PathBuf>,
        /// True DAG as JSON.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        mode: Option<EdgeMode>,
        /// Run summary whose elapsed times fill the runtime column.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Dump the score tables of a search space.
    Tables {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        init: Option<Init>,
        #[arg(long)]
        cap: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Validation(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(3),
            }
        }
    }
}
