use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use zoo_sdf::benchmarks::{gls_gmm, ridge_sdf_cv, rp_pca, FoldSplit, RidgeGrid};
use zoo_sdf::bma::{bma_sdf_series, SdfMode};
use zoo_sdf::config::{apply_class_kappa, RunConfig};
use zoo_sdf::dynamics::{
    fit_arma, fit_dynamics, fit_garch11, log_returns_from_percent, predictive_regression, Criterion,
};
use zoo_sdf::gibbs::run_chains;
use zoo_sdf::panel::{check_aligned, load_panel, read_dated_csv, standardize, DatedMatrix};
use zoo_sdf::pricing::{cross_section_fit, implied_premia, PricingReport};
use zoo_sdf::report::{EstimateReport, Interval};
use zoo_sdf::sim::{calibrate_from_reference, ols_line, run_experiment, self_mispricing_points, Experiment, SimConfig};
use zoo_sdf::stats;
use zoo_sdf::trader::{bma_estimator, expanding_backtest, BacktestConfig, VolScaling};
use zoo_sdf::ReturnPanel;

use crate::output::{emit_json, write_atomic, write_columns, write_series};
use crate::{
    BacktestArgs, BenchmarkArgs, CliError, DynamicsArgs, EstimateArgs, EstimatorArg, GlsWindow, Model, ModelOrderArgs,
    PanelArgs, PredictArgs, PriceArgs, PriorArgs, SimulateArgs, Split, VolArg,
};

type Result<T> = std::result::Result<T, CliError>;

impl PanelArgs {
    fn load(&self) -> Result<ReturnPanel> {
        let (r, f, m) = match (&self.panel, &self.returns, &self.factors_csv, &self.meta) {
            (Some(dir), ..) => (dir.join("returns.csv"), dir.join("factors.csv"), dir.join("meta.csv")),
            (None, Some(r), Some(f), Some(m)) => (r.clone(), f.clone(), m.clone()),
            _ => {
                return Err(CliError::Usage(
                    "give --panel DIR or all of --returns, --factors-csv, --meta".into(),
                ))
            }
        };
        Ok(load_panel(&r, &f, &m)?)
    }
}

impl PriorArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.prior_sr.is_some() {
            cfg.prior.sr_fraction = self.prior_sr;
            cfg.prior.psi = None;
        }
        if self.psi.is_some() {
            cfg.prior.psi = self.psi;
            cfg.prior.sr_fraction = None;
        }
        if self.r.is_some() {
            cfg.prior.r = self.r;
        }
        if self.chains.is_some() {
            cfg.chain.chains = self.chains;
        }
        if self.draws.is_some() {
            cfg.chain.n_draws = self.draws;
        }
        if self.burn_in.is_some() {
            cfg.chain.burn_in = self.burn_in;
        }
        if self.thin.is_some() {
            cfg.chain.thin = self.thin;
        }
        if !self.kappa.is_empty() {
            cfg.prior.kappa = Some(self.kappa.iter().cloned().collect::<BTreeMap<_, _>>());
        }
    }
}

impl ModelOrderArgs {
    fn criterion(&self) -> Result<Criterion> {
        self.criterion
            .parse()
            .map_err(|_| CliError::Usage(format!("--criterion must be aic or bic, got `{}`", self.criterion)))
    }
}

fn with_class_kappa(panel: ReturnPanel, cfg: &RunConfig) -> Result<ReturnPanel> {
    Ok(match &cfg.prior.kappa {
        Some(map) => apply_class_kappa(&panel, map)?,
        None => panel,
    })
}

fn pick_column(m: &DatedMatrix, name: Option<&str>, path: &Path) -> Result<Vec<f64>> {
    let j = match name {
        Some(n) => m
            .columns
            .iter()
            .position(|c| c == n)
            .ok_or_else(|| zoo_sdf::Error::Schema(format!("{} has no column `{n}`", path.display())))?,
        None if m.columns.len() == 1 => 0,
        None => {
            return Err(CliError::Usage(format!(
                "{} has {} columns; choose one with --column",
                path.display(),
                m.columns.len()
            )))
        }
    };
    Ok(stats::column(&m.values, j))
}

pub fn estimate(mut cfg: RunConfig, a: EstimateArgs) -> Result<()> {
    a.prior.apply(&mut cfg);
    let mut panel = with_class_kappa(a.panel.load()?, &cfg)?;
    if a.factors_as_assets {
        panel = panel.with_tradable_factors_as_assets()?;
    }
    let panel = standardize(&panel)?;
    let prior = cfg.prior_config()?;
    let draws = run_chains(&panel, &prior, &cfg.chain_options(), cfg.chains())?;
    if let Some(path) = &a.dump_draws {
        write_atomic(path, |tmp| draws.write_csv(tmp))?;
    }
    if let Some(path) = &a.sdf_out {
        let m = bma_sdf_series(&draws, &panel, SdfMode::FactorSpace)?;
        write_series(path, panel.dates(), "sdf", &m)?;
    }
    let report = EstimateReport::build(&draws, &panel, a.top, false)?;
    emit_json(&report, a.out.as_deref())
}

#[derive(Serialize)]
struct MispricingOutput {
    lambda_true: f64,
    t: usize,
    /// `(1/delta^2 - 1, relative self-mispricing)` per proxy.
    points: Vec<(f64, f64)>,
    intercept: f64,
    slope: f64,
    se_intercept: f64,
    se_slope: f64,
}

pub fn simulate(cfg: RunConfig, a: SimulateArgs) -> Result<()> {
    let d = SimConfig::default();
    let mut base = SimConfig {
        repetitions: a.reps.unwrap_or(d.repetitions),
        t: a.t.unwrap_or(d.t),
        seed: cfg.seed.unwrap_or(0),
        prior_sr_fraction: a.prior_sr.or(cfg.prior.sr_fraction).unwrap_or(d.prior_sr_fraction),
        n_draws: a.draws.or(cfg.chain.n_draws).unwrap_or(d.n_draws),
        burn_in: a.burn_in.or(cfg.chain.burn_in).unwrap_or(d.burn_in),
        ..d
    };
    if let (Some(dir), Some(factor)) = (&a.calibrate_panel, &a.reference_factor) {
        let reference = PanelArgs {
            panel: Some(dir.clone()),
            returns: None,
            factors_csv: None,
            meta: None,
        }
        .load()?;
        base = base.with_calibration(&calibrate_from_reference(&reference, factor)?);
    }
    if let Some(l) = a.lambda {
        base.lambda_true = l;
    }
    if a.self_mispricing {
        let points = self_mispricing_points(&base, &a.deltas, base.seed)?;
        if points.len() < 3 {
            return Err(CliError::Usage(
                "--self-mispricing needs at least three --deltas".into(),
            ));
        }
        let (intercept, slope, se_intercept, se_slope) = ols_line(&points);
        return emit_json(
            &MispricingOutput {
                lambda_true: base.lambda_true,
                t: base.t,
                points,
                intercept,
                slope,
                se_intercept,
                se_slope,
            },
            a.out.as_deref(),
        );
    }
    if a.experiment.eq_ignore_ascii_case("all") {
        let all = Experiment::ALL
            .into_iter()
            .map(|id| run_experiment(id, &base))
            .collect::<zoo_sdf::Result<Vec<_>>>()?;
        emit_json(&all, a.out.as_deref())
    } else {
        let id: Experiment = a
            .experiment
            .parse()
            .map_err(|e: zoo_sdf::Error| CliError::Usage(e.to_string()))?;
        emit_json(&run_experiment(id, &base)?, a.out.as_deref())
    }
}

fn covariance_for(assets: &DatedMatrix, window: GlsWindow, full: Option<&DatedMatrix>) -> Result<DMatrix<f64>> {
    match (window, full) {
        (GlsWindow::Oos, _) => Ok(stats::sample_covariance(&assets.values)),
        (GlsWindow::Full, None) => Err(CliError::Usage("--gls-window full needs --full-assets".into())),
        (GlsWindow::Full, Some(full)) => {
            let idx = assets
                .columns
                .iter()
                .map(|c| {
                    full.columns
                        .iter()
                        .position(|f| f == c)
                        .ok_or_else(|| zoo_sdf::Error::Schema(format!("--full-assets lacks asset `{c}`")))
                })
                .collect::<zoo_sdf::Result<Vec<_>>>()?;
            let cov = stats::sample_covariance(&full.values);
            Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| cov[(idx[i], idx[j])]))
        }
    }
}

fn price_one(
    sdf: &[f64],
    sdf_dates: &[String],
    path: &Path,
    window: GlsWindow,
    full: Option<&DatedMatrix>,
    label: &str,
) -> Result<PricingReport> {
    let assets = read_dated_csv(path)?;
    check_aligned(sdf_dates, &assets.dates, &format!("sdf vs {} dates", path.display()))?;
    let predicted = implied_premia(sdf, &assets.values)?;
    let realized = stats::column_means(&assets.values);
    let sigma = covariance_for(&assets, window, full)?;
    Ok(cross_section_fit(&predicted, &realized, &sigma, label)?)
}

#[derive(Serialize)]
struct NamedReport {
    file: String,
    report: PricingReport,
}

#[derive(Serialize)]
struct SweepOutput {
    n_cross_sections: usize,
    rmse: Interval,
    r2_ols: Interval,
    r2_gls: Interval,
    reports: Vec<NamedReport>,
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |source| zoo_sdf::Error::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()).map_err(io))
        .collect::<zoo_sdf::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(zoo_sdf::Error::InsufficientData(format!("no CSV files in {}", dir.display())).into());
    }
    Ok(files)
}

pub fn price(a: PriceArgs) -> Result<()> {
    let sdf_m = read_dated_csv(&a.sdf)?;
    let sdf = pick_column(&sdf_m, a.column.as_deref(), &a.sdf)?;
    let full = a.full_assets.as_deref().map(read_dated_csv).transpose()?;
    match (&a.assets, &a.sweep) {
        (Some(path), _) => {
            let report = price_one(&sdf, &sdf_m.dates, path, a.gls_window, full.as_ref(), &a.label)?;
            emit_json(&report, a.out.as_deref())
        }
        (None, Some(dir)) => {
            let reports = csv_files(dir)?
                .iter()
                .map(|p| {
                    let name = p
                        .file_name()
                        .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
                    price_one(&sdf, &sdf_m.dates, p, a.gls_window, full.as_ref(), &a.label)
                        .map(|report| NamedReport { file: name, report })
                })
                .collect::<Result<Vec<_>>>()?;
            let pick =
                |f: fn(&PricingReport) -> f64| Interval::of(&reports.iter().map(|r| f(&r.report)).collect::<Vec<_>>());
            let out = SweepOutput {
                n_cross_sections: reports.len(),
                rmse: pick(|r| r.rmse),
                r2_ols: pick(|r| r.r2_ols),
                r2_gls: pick(|r| r.r2_gls),
                reports,
            };
            emit_json(&out, a.out.as_deref())
        }
        (None, None) => Err(CliError::Usage("give --assets or --sweep".into())),
    }
}

pub fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let raw = a.panel.load()?;
    let panel = if a.raw { raw } else { standardize(&raw)? };
    let select = |names: &[String]| -> Result<DMatrix<f64>> {
        let idx = names
            .iter()
            .map(|n| {
                panel
                    .factor_index(n)
                    .ok_or_else(|| zoo_sdf::Error::Schema(format!("panel has no factor `{n}`")))
            })
            .collect::<zoo_sdf::Result<Vec<_>>>()?;
        Ok(panel.factors().select_columns(&idx))
    };
    let report = match a.model {
        Model::Capm => {
            if a.factors.len() != 1 {
                return Err(CliError::Usage(
                    "capm needs exactly one --factors column (the market)".into(),
                ));
            }
            gls_gmm(&select(&a.factors)?, &panel, a.intercept, "capm")?.report
        }
        Model::Gls => {
            let f = if a.factors.is_empty() {
                panel.factors().clone()
            } else {
                select(&a.factors)?
            };
            gls_gmm(&f, &panel, a.intercept, "gls")?.report
        }
        Model::Ridge => {
            let split = match a.split {
                Split::Halves => FoldSplit::Halves,
                Split::Identical => FoldSplit::Identical,
            };
            ridge_sdf_cv(&panel, &RidgeGrid::default_for(panel.n_assets()), split)?.report
        }
        Model::Rppca => rp_pca(&panel, a.components, a.rp_gamma)?.pricing.report,
    };
    emit_json(&report, a.out.as_deref())
}

pub fn backtest(mut cfg: RunConfig, a: BacktestArgs) -> Result<()> {
    a.prior.apply(&mut cfg);
    let panel = with_class_kappa(a.panel.load()?, &cfg)?;
    let bt_cfg = BacktestConfig {
        initial_window: a.initial_window,
        rebalance_every: a.rebalance,
        vol_scaling: match a.vol_scaling {
            VolArg::Off => VolScaling::Off,
            VolArg::FullSeries => VolScaling::FullSeries,
            VolArg::PerWindow => VolScaling::PerWindow,
        },
        vol_reference: a.vol_reference.clone(),
    };
    let bt = match a.estimator {
        EstimatorArg::Bma => {
            let est = bma_estimator(cfg.prior_config()?, cfg.chain_options(), cfg.chains());
            expanding_backtest(&panel, &bt_cfg, est)?
        }
        EstimatorArg::Ew => {
            let n = panel.factor_meta().iter().filter(|m| m.tradable).count();
            expanding_backtest(&panel, &bt_cfg, |_, _| Ok(vec![1.0; n]))?
        }
    };
    emit_json(&bt, a.out.as_deref())
}

#[derive(Serialize)]
struct DynamicsOutput {
    series: String,
    n_obs: usize,
    #[serde(flatten)]
    report: zoo_sdf::dynamics::DynamicsReport,
}

pub fn dynamics(a: DynamicsArgs) -> Result<()> {
    let m = read_dated_csv(&a.input)?;
    let x = pick_column(&m, a.column.as_deref(), &a.input)?;
    let (p, q) = a.orders.arma_max;
    let report = fit_dynamics(&x, p, q, a.orders.criterion()?, a.lb_lags)?;
    if let Some(path) = &a.series_out {
        write_columns(
            path,
            &m.dates,
            &["mean", "variance"],
            &[report.conditional_mean(), report.conditional_variance()],
        )?;
    }
    let series = a.column.clone().unwrap_or_else(|| m.columns[0].clone());
    emit_json(
        &DynamicsOutput {
            series,
            n_obs: x.len(),
            report,
        },
        a.out.as_deref(),
    )
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let sdf_m = read_dated_csv(&a.sdf)?;
    let x = pick_column(&sdf_m, a.column.as_deref(), &a.sdf)?;
    let targets = read_dated_csv(&a.targets)?;
    check_aligned(&sdf_m.dates, &targets.dates, "sdf vs targets dates")?;
    let (p, q) = a.orders.arma_max;
    let arma = fit_arma(&x, p, q, a.orders.criterion()?)?;
    let garch = fit_garch11(&arma.best.residuals)?;
    let y = if a.log_returns {
        targets.values.clone()
    } else {
        log_returns_from_percent(&targets.values)
    };
    let results = predictive_regression(
        &y,
        &targets.columns,
        &arma.best.fitted,
        &garch.conditional_variance,
        a.horizon,
        a.hac_lags,
    )?;
    emit_json(&results, a.out.as_deref())
}
