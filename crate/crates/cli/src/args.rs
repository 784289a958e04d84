use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "quantstream",
    version,
    about = "Streaming quantile estimation with simultaneous inference"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate quantiles of one or more series from a CSV stream.
    Stream(StreamArgs),
    /// Uniform confidence bands over the quantile grid.
    Bands(BandsArgs),
    /// Re-run a simulation study: table1, table2, conditional or qq.
    Reproduce(ReproduceArgs),
    /// QQ data of the test statistic against its simulated reference law.
    Qq(QqArgs),
    /// Tail probabilities of the estimation error.
    Tail(TailArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Step-size schedule `gamma_k = c_gamma k^-beta` and smoothing constant `a`.
#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    /// Step-size decay exponent, in (0.5, 1).
    #[arg(long, default_value_t = 0.7)]
    pub beta: f64,
    /// Step-size scale.
    #[arg(long = "c-gamma", default_value_t = 1.0)]
    pub c_gamma: f64,
    /// Smoothing constant, above 0.5.
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// Random seed.
    #[arg(long, env = "QUANTSTREAM_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// CSV input, one observation vector per line; `-` reads stdin.
    #[arg(default_value = "-")]
    pub input: String,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Quantile levels, comma separated.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub grid: String,
    /// Starting value of every iterate.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub init: f64,
    /// Write the final state to this file.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from a saved state; its schedule, grid and series count take precedence.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Test the null quantiles and emit bands instead of estimates.
    #[arg(long, requires = "null")]
    pub infer: bool,
    /// Null quantiles: CSV with one row per series and one column per level.
    #[arg(long)]
    pub null: Option<PathBuf>,
    /// Sparsity source for inference: `known:<dist>` or `kde`.
    #[arg(long, default_value = "kde")]
    pub sparsity: String,
    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Draws of the reference statistic.
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    /// Reservoir size per series for kernel sparsity estimates.
    #[arg(long, default_value_t = quantstream::reservoir::DEFAULT_CAPACITY)]
    pub reservoir: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BandsArgs {
    /// CSV input, one observation vector per line; `-` reads stdin.
    #[arg(default_value = "-")]
    pub input: String,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Quantile levels, comma separated.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub grid: String,
    /// Starting value of every iterate.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub init: f64,
    /// Band level: coverage is 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Sparsity source: `known:<dist>` or `kde`.
    #[arg(long, default_value = "kde")]
    pub sparsity: String,
    /// Draws of the reference statistic.
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    /// Reservoir size per series for kernel sparsity estimates.
    #[arg(long, default_value_t = quantstream::reservoir::DEFAULT_CAPACITY)]
    pub reservoir: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// table1, table2, conditional or qq.
    pub preset: String,
    /// Restrict to these sample sizes (comma list).
    #[arg(long)]
    pub n: Option<String>,
    /// Restrict to these step-size exponents (comma list).
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long = "c-gamma", default_value_t = 1.0)]
    pub c_gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Monte Carlo replications per cell.
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Draws of the reference statistic.
    #[arg(long = "ref-reps", default_value_t = 100_000)]
    pub ref_reps: usize,
    /// Override the preset's sparsity mode: `known` or `kde`.
    #[arg(long)]
    pub sparsity: Option<String>,
    /// Draw a fresh reference sample for every replication.
    #[arg(long)]
    pub resimulate: bool,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct QqArgs {
    /// Data law: normal, t<df> or conditional.
    #[arg(long, default_value = "normal")]
    pub dist: String,
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Quantile levels, comma separated.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub grid: String,
    /// `known` or `kde`.
    #[arg(long, default_value = "known")]
    pub sparsity: String,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long = "ref-reps", default_value_t = 100_000)]
    pub ref_reps: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TailArgs {
    /// Data law: normal or t<df>.
    #[arg(long, default_value = "normal")]
    pub dist: String,
    /// Sample sizes (comma list).
    #[arg(long, default_value = "1000,4000")]
    pub n: String,
    /// Quantile level.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Deviation thresholds (comma list, increasing).
    #[arg(long, default_value = "0.01,0.02,0.05,0.1,0.2")]
    pub x: String,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub output: OutputArgs,
}
