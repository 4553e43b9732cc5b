//! Batch front end.
//!
//! Each command resolves an effective configuration (defaults, then an
//! optional `--config` file, then flags), runs, and embeds that
//! configuration in every output so a rerun from any output file
//! reproduces it byte for byte. `--threads` and `--out` are not part of
//! the configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::dynsys::Observable;
use crate::error::Error;
use crate::limitlaw::LimitMode;

pub use config::{
    ExperimentName, KernelConfig, KernelSourceKind, LimitConfig, ModelName, SimulateConfig, TestConfig,
};

#[derive(Debug, Parser)]
#[command(name = "w1test", version, about = "Wasserstein-1 tests for empirical-measure convergence")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Root seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// JSON configuration, or any output file of the same command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate MA/ARMA trajectories or double-pendulum ensembles.
    Simulate(SimulateArgs),
    /// Build a grid covariance kernel from a model or from data.
    Kernel(KernelArgs),
    /// Simulate a limit ensemble from a kernel file.
    Limit(LimitArgs),
    /// Run one-sample or pairwise tests on series files.
    Test(TestArgs),
    /// Run a named rejection-rate experiment.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    /// Observations per trajectory (ma3, arma53).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub traj: Option<usize>,
    #[arg(long)]
    pub mean: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Total energy in joules (pendulum).
    #[arg(long)]
    pub energy: Option<f64>,
    /// Integration steps per trajectory including burn-in (pendulum).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum)]
    pub source: Option<KernelSourceKind>,
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    #[arg(long)]
    pub mean: Option<f64>,
    /// ACVF lags `K` (model) or Bartlett truncation `L` (hac).
    #[arg(long)]
    pub lags: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub tail_trim: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Series files for the hac source.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<LimitMode>,
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<LimitMode>,
    /// Series files; their rows are numbered consecutively across files.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Precomputed limit ensemble, used instead of simulating one.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Pairs such as `0-1,2-3`; defaults to `0-1`.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pub pairs: Option<Vec<(usize, usize)>>,
    /// Target law for one-sample tests: `normal:MEAN,SD` or `uniform:LO,HI`.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub name: ExperimentName,
    /// Group means 0 and 0.5.
    #[arg(long, conflicts_with = "null")]
    pub divergent: bool,
    /// Both groups with mean 0.
    #[arg(long)]
    pub null: bool,
    /// Reduced scale: 500 independent pairs, or 100 pendulum trajectories
    /// per energy with 20,000 recorded steps.
    #[arg(long)]
    pub desk_scale: bool,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Independent pairs.
    #[arg(long, conflicts_with = "per_group")]
    pub pairs: Option<usize>,
    /// Trajectories per group, all cross-group pairs.
    #[arg(long)]
    pub per_group: Option<usize>,
    /// `model`, `hac`, or a kernel file.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Bartlett truncation for hac kernels.
    #[arg(long)]
    pub lags: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Pendulum trajectories per energy.
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub energies: Option<Vec<f64>>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_observable)]
    pub observables: Option<Vec<Observable>>,
}

fn parse_mode(s: &str) -> Result<LimitMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_observable(s: &str) -> Result<Observable, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').ok_or_else(|| format!("pair '{s}' must look like I-J"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad index in pair '{s}'"));
    Ok((p(a)?, p(b)?))
}

/// Exit status for an error: 2 for usage, configuration and input
/// problems, 3 for numerical failures.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NumericalFailure { .. } => 3,
        _ => 2,
    }
}

/// Parses `args`, runs the command, and reports errors on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli) -> crate::Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(Error::invalid("--threads must be positive"));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::invalid(format!("cannot build the worker pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli))
}
