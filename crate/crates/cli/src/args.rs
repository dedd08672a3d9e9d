use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Combine summary measures from several sources with classical estimators
/// and hierarchical Bayesian models.
#[derive(Debug, Parser)]
#[command(name = "hbcombine", version)]
pub struct Cli {
    /// Seed for every random stream (bootstrap, MCMC, replication, simulation).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Primary output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classical pooled estimates with 95% intervals.
    Estimate(EstimateArgs),
    /// Fit the univariate hierarchical model.
    FitUbm(FitUbmArgs),
    /// Fit the bivariate hierarchical model.
    FitBbm(FitBbmArgs),
    /// Posterior predictive p-value for a bivariate fit.
    Ppc(PpcArgs),
    /// Run a simulation study described by a TOML or JSON scenario file.
    Simulate(SimulateArgs),
    /// Standardized source weights.
    Weights(WeightsArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset CSV with columns source_id,y,s[,covariates...].
    pub data: PathBuf,
    /// Do not prepend an intercept to covariate columns.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// raw, weighted, trimmed, lr, wlr, twlr or all.
    #[arg(long, default_value = "all")]
    pub method: String,
    /// Use the regression estimators on the covariate columns.
    #[arg(long)]
    pub covariates: bool,
    /// Cap on trimmed weights as a multiple of the mean weight.
    #[arg(long, default_value_t = 3.0)]
    pub trim_factor: f64,
    /// Bootstrap resamples for trimmed estimators.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    /// Also write standardized weights to this CSV.
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub chains: Option<usize>,
    /// Total iterations per chain, warm-up included.
    #[arg(long)]
    pub iter: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long)]
    pub max_tree_depth: Option<usize>,
    /// Prior override such as `r_theta_scale=1.0`; repeatable.
    #[arg(long = "prior", value_name = "NAME=VALUE")]
    pub priors: Vec<String>,
    /// Short run: 2 chains of 1500 iterations with 500 warm-up, no thinning.
    #[arg(long)]
    pub fast: bool,
}

#[derive(Debug, Args)]
pub struct FitUbmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Hold tau at this value.
    #[arg(long)]
    pub fix_tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitBbmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// `empirical` or a positive value to hold every sigma_s at.
    #[arg(long)]
    pub fix_sigma_s: Option<String>,
}

#[derive(Debug, Args)]
pub struct PpcArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Draws CSV written by fit-bbm.
    #[arg(long)]
    pub draws: PathBuf,
    /// Write per-draw (t_obs, t_rep) pairs to this CSV.
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (.toml or .json).
    pub scenarios: PathBuf,
    /// Override the replicate count of every scenario.
    #[arg(long)]
    pub reps: Option<usize>,
    /// 500 replicates per scenario with the full sampler configuration.
    #[arg(long, conflicts_with = "fast")]
    pub full_scale: bool,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Write per-replicate estimates in long format to this CSV.
    #[arg(long)]
    pub records_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// weighted, trimmed, ubm or bbm.
    #[arg(long)]
    pub method: String,
    /// Draws CSV for ubm and bbm weights.
    #[arg(long)]
    pub draws: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    pub trim_factor: f64,
}
