//! `mqrlr`: fit, calibrate, simulate and evaluate multi-quantile regressions
//! from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mqrlr", version, about = "Non-crossing multi-quantile regression with adaptive-lasso and curvature penalties")]
pub struct Cli {
    /// TOML file with default values for any option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "MQRLR_OUT")]
    pub out: Option<PathBuf>,
    /// Primal feasibility tolerance of the LP solver.
    #[arg(long, global = true)]
    pub feas_tol: Option<f64>,
    /// Reduced-cost optimality tolerance of the LP solver.
    #[arg(long, global = true)]
    pub opt_tol: Option<f64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic AR(1) series.
    Synth(SynthArgs),
    /// Fit one model and write it with its coefficient table.
    Estimate(EstimateArgs),
    /// Grid search over (lambda, gamma) by SIC and/or coverage error.
    Calibrate(CalibrateArgs),
    /// Simulate scenario paths from a saved model.
    Simulate(SimulateArgs),
    /// Rolling-origin backtest of one (lambda, gamma).
    Backtest(BacktestArgs),
    /// Replicated AR(1) slope-recovery study.
    Ar1study(Ar1Args),
}

#[derive(Debug, Args, Default)]
pub struct Ar1Params {
    #[arg(long, allow_hyphen_values = true)]
    pub beta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Series length.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub ar1: Ar1Params,
    /// Replication index (selects an independent stream).
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    /// File name inside the output directory.
    #[arg(long, default_value = "series.csv")]
    pub file: String,
}

#[derive(Debug, Args, Default)]
pub struct ModelParams {
    /// Quantile levels, comma separated (default 0.05, 0.10, ..., 0.95).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Lags used as covariates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Series CSV with a `value` column.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelParams,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Extra CSV columns to use as covariates next to the lags.
    #[arg(long, value_delimiter = ',')]
    pub exog: Vec<String>,
    /// Also write the final-stage LP in text form.
    #[arg(long)]
    pub dump_lp: bool,
}

#[derive(Debug, Args, Default)]
pub struct RollingParams {
    /// Training window length (raw observations).
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub n_windows: Option<usize>,
    /// Forecast horizon in steps.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Simulated paths per window for horizons above 1.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Bound simulated values to [LO, HI].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true)]
    pub clamp: Option<Vec<f64>>,
    /// Share one quantile function across paths at each step.
    #[arg(long)]
    pub pooled: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Sic,
    Mae,
    Both,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelParams,
    #[command(flatten)]
    pub rolling: RollingParams,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model file written by `estimate`.
    #[arg(long)]
    pub model: PathBuf,
    /// Series CSV whose last values seed the recursion.
    #[arg(long)]
    pub history: PathBuf,
    /// Steps per path.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true)]
    pub clamp: Option<Vec<f64>>,
    #[arg(long)]
    pub pooled: bool,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelParams,
    #[command(flatten)]
    pub rolling: RollingParams,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Ar1Args {
    #[command(flatten)]
    pub ar1: Ar1Params,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Candidate curvature penalties for cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Quantile levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
