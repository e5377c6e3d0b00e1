//! `zoo-sdf` command-line interface.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use zoo_sdf::config::RunConfig;
use zoo_sdf::ErrorKind;

const PRECEDENCE: &str = "\
Settings resolve in this order: command-line flags, then the --config file, \
then built-in defaults. ZOO_SDF_THREADS is used when --threads is absent.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.";

#[derive(Debug, Parser)]
#[command(name = "zoo-sdf", version, about = "Bayesian model averaging of linear SDFs over a factor zoo", after_help = PRECEDENCE)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML run configuration (`seed`, `threads`, `[prior]`, `[chain]`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true, env = "ZOO_SDF_THREADS")]
    threads: Option<usize>,
    /// Report failures as one JSON object on stderr
    #[arg(long, global = true)]
    json_errors: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the posterior and write a report
    Estimate(EstimateArgs),
    /// Run the simulation study
    Simulate(SimulateArgs),
    /// Price test assets with a given SDF series
    Price(PriceArgs),
    /// Fit a frequentist comparison model
    Benchmark(BenchmarkArgs),
    /// Expanding-window trading backtest
    Backtest(BacktestArgs),
    /// ARMA-GARCH dynamics of a series
    Dynamics(DynamicsArgs),
    /// Predictive regressions on fitted SDF moments
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct PanelArgs {
    /// Directory holding returns.csv, factors.csv and meta.csv
    #[arg(long, required_unless_present = "returns")]
    panel: Option<PathBuf>,
    /// Test-asset returns, `date,<asset>...`
    #[arg(long, requires_all = ["factors_csv", "meta"], conflicts_with = "panel")]
    returns: Option<PathBuf>,
    /// Factor returns, `date,<factor>...`
    #[arg(long)]
    factors_csv: Option<PathBuf>,
    /// Factor metadata, `name,tradable,asset_class,kappa_tilt`
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PriorArgs {
    /// Prior Sharpe ratio as a fraction of the ex post maximum
    #[arg(long)]
    prior_sr: Option<f64>,
    /// Fixed penalty scale instead of --prior-sr
    #[arg(long, conflicts_with = "prior_sr")]
    psi: Option<f64>,
    /// Spike-to-slab variance ratio
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    chains: Option<usize>,
    /// Sweeps per chain, burn-in included
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Tilt of a factor class, e.g. `bond=0.5`; repeat for each class
    #[arg(long, value_parser = parse_class_tilt)]
    kappa: Vec<(String, f64)>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    prior: PriorArgs,
    /// Add tradable factors to the test assets
    #[arg(long)]
    factors_as_assets: bool,
    /// Factors listed in the top-factor block
    #[arg(long, default_value_t = 5)]
    top: usize,
    /// Model-averaged SDF series as `date,sdf`
    #[arg(long)]
    sdf_out: Option<PathBuf>,
    /// Retained draws as CSV
    #[arg(long)]
    dump_draws: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// I, II, III, IV, V, VI or `all`
    #[arg(long, default_value = "all")]
    experiment: String,
    #[arg(long)]
    reps: Option<usize>,
    /// Sample length
    #[arg(long = "T", id = "t")]
    t: Option<usize>,
    /// Price of risk of the pseudo-true factor
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    prior_sr: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Take loadings and residual covariance from a reference panel directory
    #[arg(long, requires = "reference_factor")]
    calibrate_panel: Option<PathBuf>,
    /// Factor of the reference panel playing the pseudo-true factor
    #[arg(long)]
    reference_factor: Option<String>,
    /// Single-proxy self-mispricing points instead of experiments
    #[arg(long)]
    self_mispricing: bool,
    /// Proxy correlations for --self-mispricing
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
    deltas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GlsWindow {
    /// Covariance of the priced sample itself
    Oos,
    /// Covariance from --full-assets
    Full,
}

#[derive(Debug, Args)]
struct PriceArgs {
    /// SDF series, `date,<column>...`
    #[arg(long)]
    sdf: PathBuf,
    /// Column of --sdf to use when it has several
    #[arg(long)]
    column: Option<String>,
    /// Test-asset returns
    #[arg(long, required_unless_present = "sweep", conflicts_with = "sweep")]
    assets: Option<PathBuf>,
    /// Directory of test-asset CSVs, priced one by one
    #[arg(long)]
    sweep: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GlsWindow::Oos)]
    gls_window: GlsWindow,
    /// Returns whose covariance weights the fit under `--gls-window full`
    #[arg(long)]
    full_assets: Option<PathBuf>,
    #[arg(long, default_value = "sdf")]
    label: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Capm,
    Gls,
    Ridge,
    Rppca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Halves,
    Identical,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[arg(long, value_enum)]
    model: Model,
    /// Factor columns for capm (one) and gls (default: all)
    #[arg(long, value_delimiter = ',')]
    factors: Vec<String>,
    /// Free cross-sectional intercept
    #[arg(long)]
    intercept: bool,
    /// Principal components for rppca
    #[arg(long, default_value_t = 5)]
    components: usize,
    /// Weight on the mean in the rppca moment matrix
    #[arg(long, default_value_t = 10.0)]
    rp_gamma: f64,
    /// Cross-validation folds for ridge
    #[arg(long, value_enum, default_value_t = Split::Halves)]
    split: Split,
    /// Skip standardization of the panel
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Bma,
    /// Equal weights on the tradable factors
    Ew,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VolArg {
    Off,
    FullSeries,
    PerWindow,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value_t = 222)]
    initial_window: usize,
    /// Months between re-estimations
    #[arg(long, default_value_t = 12)]
    rebalance: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Bma)]
    estimator: EstimatorArg,
    #[arg(long, value_enum, default_value_t = VolArg::Off)]
    vol_scaling: VolArg,
    /// Factor whose volatility the strategy is scaled to
    #[arg(long)]
    vol_reference: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelOrderArgs {
    /// Largest AR and MA orders, `p,q`
    #[arg(long, default_value = "3,3", value_parser = parse_orders)]
    arma_max: (usize, usize),
    /// aic or bic
    #[arg(long, default_value = "bic")]
    criterion: String,
}

#[derive(Debug, Args)]
struct DynamicsArgs {
    /// Dated series, `date,<column>...`
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    column: Option<String>,
    #[command(flatten)]
    orders: ModelOrderArgs,
    #[arg(long, default_value_t = 20)]
    lb_lags: usize,
    /// Conditional mean and variance as `date,mean,variance`
    #[arg(long)]
    series_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Returns to predict, `date,<target>...`, simple returns in percent
    #[arg(long)]
    targets: PathBuf,
    /// SDF series whose fitted moments are the predictors
    #[arg(long)]
    sdf: PathBuf,
    #[arg(long)]
    column: Option<String>,
    /// Targets are already log returns
    #[arg(long)]
    log_returns: bool,
    #[arg(long, default_value_t = 12)]
    horizon: usize,
    #[arg(long, default_value_t = 15)]
    hac_lags: usize,
    #[command(flatten)]
    orders: ModelOrderArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_class_tilt(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected CLASS=VALUE, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_orders(s: &str) -> Result<(usize, usize), String> {
    let (p, q) = s.split_once(',').ok_or_else(|| format!("expected P,Q, got `{s}`"))?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("`{x}` is not an order"));
    Ok((parse(p)?, parse(q)?))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] zoo_sdf::Error),
}

impl CliError {
    fn kind(&self) -> ErrorKind {
        match self {
            CliError::Usage(_) => ErrorKind::Usage,
            CliError::Core(e) => e.kind(),
        }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.code(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

fn report_error(err: &CliError, json: bool) -> ExitCode {
    if json {
        let kind = match err.kind() {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numerical => "numerical",
        };
        let obj = serde_json::json!({
            "error": err.code(),
            "kind": kind,
            "message": err.to_string(),
            "exit_code": err.exit_code(),
        });
        eprintln!("{obj}");
    } else {
        eprintln!("error: {err}");
    }
    ExitCode::from(err.exit_code())
}

fn resolve_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    if g.threads.is_some() {
        cfg.threads = g.threads;
    }
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set up {n} threads: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Estimate(a) => commands::estimate(cfg, a),
        Command::Simulate(a) => commands::simulate(cfg, a),
        Command::Price(a) => commands::price(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Backtest(a) => commands::backtest(cfg, a),
        Command::Dynamics(a) => commands::dynamics(a),
        Command::Predict(a) => commands::predict(a),
    }
}

fn main() -> ExitCode {
    let json = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if json {
                return report_error(&CliError::Usage(e.to_string().trim().to_string()), true);
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e, json),
    }
}
