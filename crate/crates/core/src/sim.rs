//! Monte Carlo lab: synthetic panels with a pseudo-true factor, a useless
//! factor and noisy proxies, and the six recovery experiments.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::gls_lambda;
use crate::bma::{bma_sdf_series, factor_probabilities, posterior_mprs, SdfMode};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain_with, ChainOptions};
use crate::linalg;
use crate::panel::{standardize, synthetic_dates, AssetClass, FactorMeta, ReturnPanel};
use crate::pricing::implied_premia;
use crate::prior::{PriorConfig, PsiSpec};
use crate::stats;

pub const USELESS: &str = "u_f";
pub const TRUE_FACTOR: &str = "f_true";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::I,
        Experiment::II,
        Experiment::III,
        Experiment::IV,
        Experiment::V,
        Experiment::VI,
    ];

    pub fn includes_true_factor(self) -> bool {
        matches!(self, Experiment::I | Experiment::II | Experiment::III)
    }

    /// Number of noisy proxies in the factor menu.
    pub fn n_proxies(self) -> usize {
        match self {
            Experiment::I => 0,
            Experiment::II | Experiment::IV => 1,
            Experiment::III | Experiment::V => 2,
            Experiment::VI => 4,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Experiment::I => "I",
            Experiment::II => "II",
            Experiment::III => "III",
            Experiment::IV => "IV",
            Experiment::V => "V",
            Experiment::VI => "VI",
        };
        f.write_str(s)
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Experiment::I),
            "II" | "2" => Ok(Experiment::II),
            "III" | "3" => Ok(Experiment::III),
            "IV" | "4" => Ok(Experiment::IV),
            "V" | "5" => Ok(Experiment::V),
            "VI" | "6" => Ok(Experiment::VI),
            other => Err(Error::InvalidArgument(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub lambda_true: f64,
    /// Loadings `C` of the test assets on the pseudo-true factor.
    pub loadings: Vec<f64>,
    /// Covariance of the return innovations `w_R`.
    pub residual_cov: DMatrix<f64>,
    /// Correlations of the proxies with the pseudo-true factor.
    pub deltas: Vec<f64>,
    pub include_true_factor: bool,
    pub t: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub prior_sr_fraction: f64,
    pub n_draws: usize,
    pub burn_in: usize,
    /// Append the simulated factors to the test assets.
    pub factors_as_test_assets: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let n = 25;
        SimConfig {
            lambda_true: 0.25,
            loadings: (0..n).map(|i| -0.6 + 1.4 * i as f64 / (n - 1) as f64).collect(),
            residual_cov: DMatrix::identity(n, n) * 0.25,
            deltas: vec![0.4, 0.3, 0.2, 0.1],
            include_true_factor: true,
            t: 400,
            repetitions: 200,
            seed: 0,
            prior_sr_fraction: 0.6,
            n_draws: 3_000,
            burn_in: 500,
            factors_as_test_assets: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.loadings.len();
        if n < 2 {
            return Err(Error::Config("need at least two test assets".into()));
        }
        if self.residual_cov.shape() != (n, n) {
            return Err(Error::Config(format!(
                "residual covariance is {:?} for {n} assets",
                self.residual_cov.shape()
            )));
        }
        linalg::cholesky(&self.residual_cov, "residual covariance").map_err(|e| Error::Config(e.to_string()))?;
        if let Some(d) = self.deltas.iter().find(|d| !(d.abs() < 1.0)) {
            return Err(Error::Config(format!("proxy correlation {d} outside (-1, 1)")));
        }
        if self.t < 10 {
            return Err(Error::Config(format!("T = {} too short", self.t)));
        }
        Ok(())
    }

    /// Configuration with the factor menu of an experiment.
    pub fn for_experiment(&self, id: Experiment) -> Result<SimConfig> {
        let m = id.n_proxies();
        if self.deltas.len() < m {
            return Err(Error::Config(format!(
                "experiment {id} needs {m} proxy correlations, {} given",
                self.deltas.len()
            )));
        }
        Ok(SimConfig {
            deltas: self.deltas[..m].to_vec(),
            include_true_factor: id.includes_true_factor(),
            ..self.clone()
        })
    }

    pub fn factor_names(&self) -> Vec<String> {
        let mut names = vec![USELESS.to_string()];
        if self.include_true_factor {
            names.push(TRUE_FACTOR.to_string());
        }
        names.extend((1..=self.deltas.len()).map(|j| format!("f_{j}")));
        names
    }
}

/// A generated sample together with the latent pseudo-true factor.
#[derive(Debug, Clone)]
pub struct SimSample {
    pub panel: ReturnPanel,
    pub f_true: Vec<f64>,
}

/// Draw one panel: `R_t = C lambda + C f_t + w_t`, proxies
/// `f_j = delta_j f + sqrt(1 - delta_j^2) w_j`, and an independent useless factor.
pub fn generate_sample_with_truth<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<SimSample> {
    cfg.validate()?;
    let n = cfg.loadings.len();
    let t = cfg.t;
    let chol = linalg::cholesky(&cfg.residual_cov, "residual covariance")?;
    let l = chol.l();
    let c = DVector::from_column_slice(&cfg.loadings);
    let mu = &c * cfg.lambda_true;
    let f_true: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
    let useless: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
    let mut returns = DMatrix::zeros(t, n);
    for s in 0..t {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = &l * z;
        for i in 0..n {
            returns[(s, i)] = mu[i] + c[i] * f_true[s] + w[i];
        }
    }
    let names = cfg.factor_names();
    let k = names.len();
    let mut factors = DMatrix::zeros(t, k);
    factors.column_mut(0).copy_from_slice(&useless);
    let mut col = 1;
    if cfg.include_true_factor {
        factors.column_mut(1).copy_from_slice(&f_true);
        col = 2;
    }
    for (j, &d) in cfg.deltas.iter().enumerate() {
        let s = (1.0 - d * d).sqrt();
        for r in 0..t {
            let w: f64 = rng.sample(StandardNormal);
            factors[(r, col + j)] = d * f_true[r] + s * w;
        }
    }
    let meta = names
        .iter()
        .map(|nm| FactorMeta::new(nm.clone(), cfg.factors_as_test_assets, AssetClass::Nontradable))
        .collect();
    let mut panel = ReturnPanel::new(
        synthetic_dates(1900, t),
        (1..=n).map(|i| format!("r{i}")).collect(),
        returns,
        factors,
        meta,
    )?;
    if cfg.factors_as_test_assets {
        panel = panel.with_tradable_factors_as_assets()?;
    }
    Ok(SimSample { panel, f_true })
}

pub fn generate_sample<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<ReturnPanel> {
    Ok(generate_sample_with_truth(cfg, rng)?.panel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lambda_true: f64,
    pub loadings: Vec<f64>,
    pub residual_cov: DMatrix<f64>,
}

/// Calibrate the data-generating process to a reference panel: the named
/// factor (rescaled to unit variance) prices the assets by GLS.
pub fn calibrate_from_reference(reference: &ReturnPanel, factor: &str) -> Result<Calibration> {
    let j = reference
        .factor_index(factor)
        .ok_or_else(|| Error::Schema(format!("reference panel has no factor `{factor}`")))?;
    let f = stats::column(reference.factors(), j);
    let sd = stats::std_dev(&f);
    if !(sd > 0.0) {
        return Err(Error::Calibration(format!("factor `{factor}` is constant")));
    }
    let fs = DMatrix::from_iterator(f.len(), 1, f.iter().map(|v| v / sd));
    let (lambda, cf, _, sigma) = gls_lambda(&fs, reference.returns(), false)
        .map_err(|e| Error::Calibration(format!("reference GLS fit failed: {e}")))?;
    let c = cf.column(0).into_owned();
    let mut residual_cov = sigma - &c * c.transpose();
    linalg::symmetrize(&mut residual_cov);
    linalg::cholesky(&residual_cov, "calibrated residual covariance").map_err(|e| Error::Calibration(e.to_string()))?;
    Ok(Calibration {
        lambda_true: lambda[0],
        loadings: c.iter().copied().collect(),
        residual_cov,
    })
}

impl SimConfig {
    pub fn with_calibration(&self, cal: &Calibration) -> SimConfig {
        SimConfig {
            lambda_true: cal.lambda_true,
            loadings: cal.loadings.clone(),
            residual_cov: cal.residual_cov.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    /// Sharpe ratio implied on the test assets by the model-averaged SDF.
    pub total_mpr: f64,
    pub mprs: Vec<f64>,
    pub probs: Vec<f64>,
    /// Failed attempts before this repetition succeeded.
    pub retries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

impl Quantiles {
    pub fn of(x: &[f64]) -> Quantiles {
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        Quantiles {
            mean: stats::mean(&s),
            q025: stats::quantile_sorted(&s, 0.025),
            q50: stats::quantile_sorted(&s, 0.5),
            q975: stats::quantile_sorted(&s, 0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: Experiment,
    pub t: usize,
    pub lambda_true: f64,
    pub factor_names: Vec<String>,
    pub total_mpr: Quantiles,
    pub mprs: Vec<Quantiles>,
    pub probs: Vec<Quantiles>,
    pub failures: usize,
    pub records: Vec<RepRecord>,
}

impl ExperimentSummary {
    pub fn mean_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|q| q.mean).collect()
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factor_names.iter().position(|n| n == name)
    }
}

/// Sharpe ratio `sqrt(pi' Sigma_R^{-1} pi)` of the premia `pi = -cov(M, R)`
/// that an SDF series implies on the test assets.
pub fn sdf_implied_sharpe(sdf: &[f64], returns: &DMatrix<f64>) -> Result<f64> {
    let pi = implied_premia(sdf, returns)?;
    let chol = linalg::cholesky(&stats::sample_covariance(returns), "test-asset covariance")?;
    Ok(linalg::inv_quad_form(&chol, &pi).sqrt())
}

fn one_repetition(cfg: &SimConfig, seed: u64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let panel = standardize(&generate_sample(cfg, &mut rng)?)?;
    let prior = PriorConfig {
        psi: PsiSpec::SrFraction(cfg.prior_sr_fraction),
        ..PriorConfig::default()
    };
    let opts = ChainOptions {
        n_draws: cfg.n_draws,
        burn_in: cfg.burn_in,
        thin: 1,
        seed: rng.random(),
        cov_stride: usize::MAX,
        ..ChainOptions::default()
    };
    let draws = run_chain_with(&panel, &prior, &opts, 0)?;
    let m = bma_sdf_series(&draws, &panel, SdfMode::FactorSpace)?;
    let total = sdf_implied_sharpe(&m, panel.returns())?;
    let mprs = posterior_mprs(&draws)?.mprs.iter().map(|e| e.mean).collect();
    let probs = factor_probabilities(&draws)?.iter().map(|e| e.mean).collect();
    Ok((total, mprs, probs))
}

/// Retries allowed per repetition before the experiment is abandoned.
const MAX_RETRIES: usize = 20;

/// Run every repetition of an experiment (in parallel) and summarize.
pub fn run_experiment(id: Experiment, base: &SimConfig) -> Result<ExperimentSummary> {
    let cfg = base.for_experiment(id)?;
    cfg.validate()?;
    if cfg.repetitions == 0 {
        return Err(Error::Config("need at least one repetition".into()));
    }
    let records = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
            seeder.set_stream(rep as u64 + 1);
            for retries in 0..=MAX_RETRIES {
                let seed: u64 = seeder.random();
                if let Ok((total_mpr, mprs, probs)) = one_repetition(&cfg, seed) {
                    return Ok(RepRecord {
                        rep,
                        seed,
                        total_mpr,
                        mprs,
                        probs,
                        retries,
                    });
                }
            }
            Err(Error::DegeneratePosterior(format!(
                "repetition {rep} failed {} times",
                MAX_RETRIES + 1
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = cfg.factor_names().len();
    let col = |f: &dyn Fn(&RepRecord) -> f64| Quantiles::of(&records.iter().map(f).collect::<Vec<_>>());
    Ok(ExperimentSummary {
        experiment: id,
        t: cfg.t,
        lambda_true: cfg.lambda_true,
        factor_names: cfg.factor_names(),
        total_mpr: col(&|r| r.total_mpr),
        mprs: (0..k).map(|j| col(&|r| r.mprs[j])).collect(),
        probs: (0..k).map(|j| col(&|r| r.probs[j])).collect(),
        failures: records.iter().map(|r| r.retries).sum(),
        records,
    })
}

/// Points `(1/delta^2 - 1, relative self-mispricing)` of single-proxy GLS
/// fits on the test assets, one per `delta`.
pub fn self_mispricing_points(base: &SimConfig, deltas: &[f64], seed: u64) -> Result<Vec<(f64, f64)>> {
    deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let cfg = SimConfig {
                deltas: vec![d],
                include_true_factor: false,
                factors_as_test_assets: false,
                ..base.clone()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let s = generate_sample_with_truth(&cfg, &mut rng)?;
            let proxy = s.panel.factors().columns(1, 1).into_owned();
            let (lambda, ..) = gls_lambda(&proxy, s.panel.returns(), false)?;
            let fj = stats::column(&proxy, 0);
            let implied = lambda[0] * stats::variance(&fj);
            let truth = cfg.lambda_true * stats::covariance(&s.f_true, &fj);
            Ok((1.0 / (d * d) - 1.0, implied / truth - 1.0))
        })
        .collect()
}

/// OLS of `y` on `[1, x]`: `(intercept, slope, se_intercept, se_slope)`.
pub fn ols_line(points: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (mx, my) = (stats::mean(&xs), stats::mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let s2 = rss / (n - 2.0);
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    (intercept, slope, se_intercept, se_slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proxy_correlations() {
        let cfg = SimConfig {
            deltas: vec![1.0 - 1e-6, 0.0],
            t: 10_000,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = generate_sample_with_truth(&cfg, &mut rng).unwrap();
        let f = s.panel.factors();
        let near = stats::correlation(&stats::column(f, 2), &s.f_true);
        let zero = stats::correlation(&stats::column(f, 3), &s.f_true);
        assert!(near > 0.999);
        assert!(zero.abs() < 3.0 / (cfg.t as f64).sqrt());
        for j in 0..f.ncols() {
            assert!((stats::variance(&stats::column(f, j)) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn experiment_menus() {
        let base = SimConfig::default();
        let names = |e| base.for_experiment(e).unwrap().factor_names();
        assert_eq!(names(Experiment::I), vec!["u_f", "f_true"]);
        assert_eq!(names(Experiment::III), vec!["u_f", "f_true", "f_1", "f_2"]);
        assert_eq!(names(Experiment::VI), vec!["u_f", "f_1", "f_2", "f_3", "f_4"]);
        assert_eq!("vi".parse::<Experiment>().unwrap(), Experiment::VI);
    }

    #[test]
    fn calibration_recovers_exact_pricing() {
        let t = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
        let n = 4;
        let betas = [0.2, 0.6, 1.0, -0.4];
        let lambda = 0.3;
        // returns whose sample means equal cov(R, f) * lambda exactly
        let mut r = DMatrix::from_fn(t, n, |s, i| betas[i] * f[s] + rng.sample::<f64, _>(StandardNormal));
        let cf = stats::cross_covariance(&r, &DMatrix::from_column_slice(t, 1, &f));
        let sd = stats::std_dev(&f);
        for i in 0..n {
            let col_mean = r.column(i).mean();
            let target = cf[(i, 0)] / sd * lambda;
            r.column_mut(i).add_scalar_mut(target - col_mean);
        }
        let panel = ReturnPanel::new(
            synthetic_dates(1950, t),
            (0..n).map(|i| format!("a{i}")).collect(),
            r,
            DMatrix::from_column_slice(t, 1, &f),
            vec![FactorMeta::new("hml", false, AssetClass::Nontradable)],
        )
        .unwrap();
        let cal = calibrate_from_reference(&panel, "hml").unwrap();
        assert!((cal.lambda_true - lambda).abs() < 1e-8, "{}", cal.lambda_true);
    }

    #[test]
    fn single_proxy_gls_scales_by_inverse_delta() {
        let cfg = SimConfig {
            lambda_true: 0.2,
            t: 50_000,
            ..SimConfig::default()
        };
        let pts = self_mispricing_points(&cfg, &[0.5], 3).unwrap();
        // relative mispricing at delta = 0.5 is 1/delta^2 - 1 = 3
        assert!((pts[0].1 - 3.0).abs() < 0.3, "{:?}", pts);
    }
}
