//! Time-series diagnostics of an SDF series: ARMA mean, GARCH(1,1)
//! volatility, half-lives, Ljung-Box tests and predictive regressions.

use std::str::FromStr;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stats;

const PENALTY: f64 = 1e300;

struct Objective<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let v = (self.0)(p);
        Ok(if v.is_finite() { v } else { PENALTY })
    }
}

/// Nelder-Mead from `start` with an axis-aligned initial simplex, restarted
/// once from the first optimum.
fn minimize<F: Fn(&[f64]) -> f64>(f: F, start: Vec<f64>, step: &[f64], max_iters: u64) -> Result<(Vec<f64>, f64)> {
    let mut best = start;
    let mut cost = PENALTY;
    for _ in 0..2 {
        let mut simplex = vec![best.clone()];
        for (i, s) in step.iter().enumerate() {
            let mut v = best.clone();
            v[i] += s;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-12)
            .map_err(|e| Error::Optimizer(e.to_string()))?;
        let res = Executor::new(Objective(&f), solver)
            .configure(|s| s.max_iters(max_iters))
            .run()
            .map_err(|e| Error::Optimizer(e.to_string()))?;
        let state = res.state();
        if let Some(p) = state.get_best_param() {
            best = p.clone();
            cost = state.get_best_cost();
        }
    }
    Ok((best, cost))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Aic,
    Bic,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaFit {
    pub p: usize,
    pub q: usize,
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Number of observations entering the sum of squares.
    pub n_obs: usize,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaCandidate {
    pub p: usize,
    pub q: usize,
    pub aic: f64,
    pub bic: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaSelection {
    pub best: ArmaFit,
    pub criterion: Criterion,
    pub candidates: Vec<ArmaCandidate>,
}

/// Conditional mean recursion; lags before the sample are the sample mean
/// (levels) and zero (shocks).
fn arma_filter(x: &[f64], mean: f64, c: f64, ar: &[f64], ma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let t = x.len();
    let mut fitted = vec![0.0; t];
    let mut eps = vec![0.0; t];
    for s in 0..t {
        let mut m = c;
        for (i, phi) in ar.iter().enumerate() {
            m += phi * if s > i { x[s - i - 1] } else { mean };
        }
        for (j, theta) in ma.iter().enumerate() {
            if s > j {
                m += theta * eps[s - j - 1];
            }
        }
        fitted[s] = m;
        eps[s] = x[s] - m;
    }
    (fitted, eps)
}

/// Largest modulus among the roots of `z^n - a_1 z^{n-1} - ... - a_n`.
fn spectral_radius(a: &[f64]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let mut comp = DMatrix::zeros(n, n);
    for (j, v) in a.iter().enumerate() {
        comp[(0, j)] = *v;
    }
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    comp.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn ar_ols(x: &[f64], p: usize, start: usize) -> Option<Vec<f64>> {
    let rows = x.len() - start;
    let design = DMatrix::from_fn(rows, p + 1, |r, j| if j == 0 { 1.0 } else { x[start + r - j] });
    let y = DVector::from_fn(rows, |r, _| x[start + r]);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * y;
    linalg::spd_solve(&xtx, &xty, "AR design")
        .ok()
        .map(|b| b.iter().copied().collect())
}

/// Conditional-sum-of-squares fit of an ARMA(p, q) using observations from
/// `start` on (so that candidates share a sample).
pub fn fit_arma_order(series: &[f64], p: usize, q: usize, start: usize) -> Result<ArmaFit> {
    let t = series.len();
    if start < p || start >= t {
        return Err(Error::InvalidArgument(format!(
            "start {start} invalid for p = {p}, T = {t}"
        )));
    }
    let var = stats::variance(series);
    if !(var > 1e-300) {
        return Err(Error::DegenerateFit("series has zero variance".into()));
    }
    let mean = stats::mean(series);
    let n = t - start;
    let sse = |c: f64, ar: &[f64], ma: &[f64]| -> f64 {
        let (_, e) = arma_filter(series, mean, c, ar, ma);
        e[start..].iter().map(|v| v * v).sum()
    };
    let init = ar_ols(series, p, start).unwrap_or_else(|| {
        let mut v = vec![mean];
        v.extend(std::iter::repeat_n(0.0, p));
        v
    });
    let (c, ar, ma) = if q == 0 {
        (init[0], init[1..].to_vec(), Vec::new())
    } else {
        let mut x0 = init.clone();
        x0.extend(std::iter::repeat_n(0.0, q));
        let mut step = vec![0.1; p + q + 1];
        step[0] = 0.1 * var.sqrt();
        let (x, _) = minimize(
            |v: &[f64]| {
                if spectral_radius(&v[1..=p]) >= 1.0
                    || spectral_radius(&v[p + 1..].iter().map(|m| -m).collect::<Vec<_>>()) >= 1.0
                {
                    return PENALTY;
                }
                sse(v[0], &v[1..=p], &v[p + 1..])
            },
            x0,
            &step,
            4_000,
        )?;
        (x[0], x[1..=p].to_vec(), x[p + 1..].to_vec())
    };
    let ss = sse(c, &ar, &ma);
    let sigma2 = ss / n as f64;
    if !(sigma2 > 0.0) {
        return Err(Error::DegenerateFit("zero residual variance".into()));
    }
    let loglik = -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let k = (p + q + 2) as f64;
    let (fitted, residuals) = arma_filter(series, mean, c, &ar, &ma);
    Ok(ArmaFit {
        p,
        q,
        intercept: c,
        ar,
        ma,
        sigma2,
        loglik,
        aic: -2.0 * loglik + 2.0 * k,
        bic: -2.0 * loglik + k * (n as f64).ln(),
        n_obs: n,
        fitted,
        residuals,
    })
}

/// Bound on the roots below which a fitted model counts as stationary and
/// invertible.
const ROOT_LIMIT: f64 = 1.0 - 1e-6;

/// Fit every ARMA(p, q) with `p <= max_p`, `q <= max_q` and keep the
/// stationary, invertible candidate minimizing the criterion.
pub fn fit_arma(series: &[f64], max_p: usize, max_q: usize, criterion: Criterion) -> Result<ArmaSelection> {
    let t = series.len();
    if t <= 10 * (max_p + max_q).max(1) {
        return Err(Error::InsufficientData(format!(
            "T = {t} too short for orders up to ({max_p}, {max_q})"
        )));
    }
    if !(stats::variance(series) > 1e-300) {
        return Err(Error::DegenerateFit("series has zero variance".into()));
    }
    let mut best: Option<ArmaFit> = None;
    let mut candidates = Vec::new();
    for p in 0..=max_p {
        for q in 0..=max_q {
            let fit = fit_arma_order(series, p, q, max_p)?;
            let neg_ma: Vec<f64> = fit.ma.iter().map(|m| -m).collect();
            let accepted = spectral_radius(&fit.ar) < ROOT_LIMIT && spectral_radius(&neg_ma) < ROOT_LIMIT;
            candidates.push(ArmaCandidate {
                p,
                q,
                aic: fit.aic,
                bic: fit.bic,
                accepted,
            });
            let score = |f: &ArmaFit| match criterion {
                Criterion::Aic => f.aic,
                Criterion::Bic => f.bic,
            };
            if accepted && best.as_ref().is_none_or(|b| score(&fit) < score(b)) {
                best = Some(fit);
            }
        }
    }
    let best =
        best.ok_or_else(|| Error::DegenerateFit("every candidate order has explosive or non-invertible roots".into()))?;
    Ok(ArmaSelection {
        best,
        criterion,
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub conditional_variance: Vec<f64>,
    pub loglik: f64,
    /// Sandwich standard errors of `(omega, alpha, beta)`.
    pub robust_se: [f64; 3],
    /// Persistence `alpha + beta` sits at the stationarity boundary.
    pub near_integrated: bool,
}

impl GarchFit {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }
}

/// Conditional variances `s2_t = omega + alpha e_{t-1}^2 + beta s2_{t-1}`
/// started at the unconditional variance.
pub fn garch_variance(residuals: &[f64], omega: f64, alpha: f64, beta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(residuals.len());
    let mut s2 = omega / (1.0 - alpha - beta);
    for t in 0..residuals.len() {
        if t > 0 {
            let prev = residuals[t - 1];
            s2 = omega + alpha * prev * prev + beta * s2;
        }
        out.push(s2);
    }
    out
}

fn garch_loglik_terms(residuals: &[f64], theta: &[f64; 3]) -> Option<Vec<f64>> {
    let [omega, alpha, beta] = *theta;
    if !(omega > 0.0) || alpha + beta >= 1.0 {
        return None;
    }
    let s2 = garch_variance(residuals, omega, alpha, beta);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    s2.iter()
        .zip(residuals)
        .map(|(s, e)| (*s > 0.0).then(|| -0.5 * (ln2pi + s.ln() + e * e / s)))
        .collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Map unconstrained coordinates to `(omega, alpha, beta)` with
/// `alpha, beta >= 0` and `alpha + beta < 1`.
fn garch_params(v: &[f64]) -> [f64; 3] {
    let persistence = logistic(v[1]);
    let alpha = persistence * logistic(v[2]);
    [v[0].exp(), alpha, persistence - alpha]
}

/// Starting points in the `(alpha, beta)` simplex.
const GARCH_STARTS: [(f64, f64); 5] = [(0.05, 0.90), (0.10, 0.80), (0.15, 0.70), (0.05, 0.50), (0.20, 0.50)];

/// Gaussian quasi-maximum likelihood GARCH(1,1) with sandwich standard errors.
pub fn fit_garch11(residuals: &[f64]) -> Result<GarchFit> {
    let t = residuals.len();
    if t < 100 {
        return Err(Error::InsufficientData(format!(
            "GARCH needs at least 100 observations, got {t}"
        )));
    }
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite residual".into()));
    }
    let var = residuals.iter().map(|e| e * e).sum::<f64>() / t as f64;
    if !(var > 1e-300) || stats::variance(residuals) <= 1e-300 {
        return Err(Error::DegenerateFit("residuals have zero variance".into()));
    }
    let nll = |v: &[f64]| -> f64 {
        garch_loglik_terms(residuals, &garch_params(v))
            .map(|l| -l.iter().sum::<f64>())
            .unwrap_or(PENALTY)
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (a, b) in GARCH_STARTS {
        let p = a + b;
        let x0 = vec![(var * (1.0 - p)).ln(), logit(p), logit(a / p)];
        let (x, c) = minimize(nll, x0, &[0.5, 0.5, 0.5], 3_000)?;
        if best.as_ref().is_none_or(|(_, bc)| c < *bc) {
            best = Some((x, c));
        }
    }
    let (x, cost) = best.expect("at least one start");
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let constant_ll = -0.5 * t as f64 * (ln2pi + var.ln() + 1.0);
    let loglik = -cost;
    if !(loglik >= constant_ll - 1e-6 * constant_ll.abs().max(1.0)) {
        return Err(Error::DegenerateFit(format!(
            "GARCH likelihood {loglik} does not reach the constant-variance value {constant_ll}"
        )));
    }
    let theta = garch_params(&x);
    let [omega, alpha, beta] = theta;
    Ok(GarchFit {
        omega,
        alpha,
        beta,
        conditional_variance: garch_variance(residuals, omega, alpha, beta),
        loglik,
        robust_se: sandwich_se(residuals, &theta),
        near_integrated: alpha + beta > 0.999,
    })
}

/// Sandwich covariance `H^{-1} (S'S) H^{-1}` from finite-difference scores
/// and Hessian of the per-observation log likelihood.
fn sandwich_se(residuals: &[f64], theta: &[f64; 3]) -> [f64; 3] {
    let t = residuals.len();
    let h: Vec<f64> = theta.iter().map(|v| 1e-5 * v.abs().max(1e-3)).collect();
    let shifted = |k: usize, d: f64| -> Option<Vec<f64>> {
        let mut th = *theta;
        th[k] += d;
        garch_loglik_terms(residuals, &th)
    };
    let mut scores = DMatrix::zeros(t, 3);
    for k in 0..3 {
        match (shifted(k, h[k]), shifted(k, -h[k])) {
            (Some(up), Some(dn)) => {
                for s in 0..t {
                    scores[(s, k)] = (up[s] - dn[s]) / (2.0 * h[k]);
                }
            }
            _ => return [f64::NAN; 3],
        }
    }
    let total = |th: [f64; 3]| garch_loglik_terms(residuals, &th).map(|l| l.iter().sum::<f64>());
    let mut hess = DMatrix::zeros(3, 3);
    for i in 0..3 {
        for j in i..3 {
            let at = |si: f64, sj: f64| {
                let mut th = *theta;
                th[i] += si * h[i];
                th[j] += sj * h[j];
                total(th)
            };
            let v = match (at(1.0, 1.0), at(1.0, -1.0), at(-1.0, 1.0), at(-1.0, -1.0)) {
                (Some(a), Some(b), Some(c), Some(d)) => (a - b - c + d) / (4.0 * h[i] * h[j]),
                _ => return [f64::NAN; 3],
            };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let meat = scores.transpose() * &scores;
    match hess.try_inverse() {
        Some(hinv) => {
            let cov = &hinv * meat * &hinv;
            [0, 1, 2].map(|k| cov[(k, k)].max(0.0).sqrt())
        }
        None => [f64::NAN; 3],
    }
}

/// Months for a variance shock to halve: `1 + ln(1/2) / ln(alpha + beta)`.
pub fn half_life(alpha: f64, beta: f64) -> Result<f64> {
    let p = alpha + beta;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Undefined(format!(
            "half-life needs persistence in (0, 1), got {p}"
        )));
    }
    Ok(1.0 + 0.5f64.ln() / p.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
}

pub fn autocorrelations(series: &[f64], lags: usize) -> Vec<f64> {
    let m = stats::mean(series);
    let d: Vec<f64> = series.iter().map(|v| v - m).collect();
    let den: f64 = d.iter().map(|v| v * v).sum();
    (1..=lags)
        .map(|k| d[k..].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / den)
        .collect()
}

pub fn ljung_box(series: &[f64], lags: usize) -> Result<LjungBox> {
    let t = series.len();
    if lags == 0 || 4 * lags >= t {
        return Err(Error::InvalidArgument(format!(
            "Ljung-Box needs 0 < lags < T/4 (lags {lags}, T {t})"
        )));
    }
    if !(stats::variance(series) > 1e-300) {
        return Err(Error::Undefined("constant series has no autocorrelation".into()));
    }
    let tf = t as f64;
    let q = autocorrelations(series, lags)
        .iter()
        .enumerate()
        .map(|(i, r)| r * r / (tf - (i + 1) as f64))
        .sum::<f64>()
        * tf
        * (tf + 2.0);
    let chi = ChiSquared::new(lags as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(LjungBox {
        statistic: q,
        p_value: chi.sf(q),
        lags,
    })
}

/// ARMA mean, GARCH(1,1) variance on its residuals, and residual diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub arma: ArmaSelection,
    pub garch: GarchFit,
    /// `None` when the fitted variance process is not mean reverting.
    pub half_life: Option<f64>,
    pub ljung_box_residuals: LjungBox,
    pub ljung_box_squared: LjungBox,
}

impl DynamicsReport {
    pub fn conditional_mean(&self) -> &[f64] {
        &self.arma.best.fitted
    }

    pub fn conditional_variance(&self) -> &[f64] {
        &self.garch.conditional_variance
    }
}

pub fn fit_dynamics(
    series: &[f64],
    max_p: usize,
    max_q: usize,
    criterion: Criterion,
    lb_lags: usize,
) -> Result<DynamicsReport> {
    let arma = fit_arma(series, max_p, max_q, criterion)?;
    let garch = fit_garch11(&arma.best.residuals)?;
    let z2: Vec<f64> = arma
        .best
        .residuals
        .iter()
        .zip(&garch.conditional_variance)
        .map(|(e, v)| e * e / v)
        .collect();
    Ok(DynamicsReport {
        half_life: half_life(garch.alpha, garch.beta).ok(),
        ljung_box_residuals: ljung_box(&arma.best.residuals, lb_lags)?,
        ljung_box_squared: ljung_box(&z2, lb_lags)?,
        arma,
        garch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveResult {
    pub target: String,
    pub n_obs: usize,
    /// Intercept, variance slope, mean-times-variance slope.
    pub coefficients: [f64; 3],
    pub hac_se: [f64; 3],
    pub r2: f64,
    pub f_stat: f64,
    pub p_value: f64,
    /// Joint test with the classical homoskedastic covariance.
    pub ols_f_stat: f64,
    pub ols_p_value: f64,
}

/// Newey-West long-run covariance of `x_t u_t` with Bartlett weights.
fn newey_west(x: &DMatrix<f64>, u: &[f64], lags: usize) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let g = DMatrix::from_fn(n, k, |t, j| x[(t, j)] * u[t]);
    let mut s = g.transpose() * &g;
    for l in 1..=lags.min(n.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let gl = g.rows(l, n - l).transpose() * g.rows(0, n - l);
        s += (&gl + gl.transpose()) * w;
    }
    s
}

fn wald_slopes(beta: &DVector<f64>, cov: &DMatrix<f64>, df: f64) -> Result<(f64, f64)> {
    let b = beta.rows(1, 2).into_owned();
    let v = cov.view((1, 1), (2, 2)).into_owned();
    let chol = linalg::cholesky(&v, "slope covariance")?;
    let f = linalg::inv_quad_form(&chol, &b) / 2.0;
    let dist = FisherSnedecor::new(2.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((f, dist.sf(f)))
}

/// Regress `horizon`-period cumulative log returns starting at `t` on
/// `[1, v_{t-1}, m_{t-1} v_{t-1}]` for each target column.
pub fn predictive_regression(
    targets: &DMatrix<f64>,
    names: &[String],
    cond_mean: &[f64],
    cond_var: &[f64],
    horizon: usize,
    hac_lags: usize,
) -> Result<Vec<PredictiveResult>> {
    let t = targets.nrows();
    if cond_mean.len() != t || cond_var.len() != t || names.len() != targets.ncols() {
        return Err(Error::Dimension(format!(
            "{t} target rows, {} names for {} targets, {} means, {} variances",
            names.len(),
            targets.ncols(),
            cond_mean.len(),
            cond_var.len()
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if t < horizon + 6 {
        return Err(Error::InsufficientData(format!(
            "T = {t} too short for horizon {horizon}"
        )));
    }
    let n = t - horizon;
    let x = DMatrix::from_fn(n, 3, |r, j| match j {
        0 => 1.0,
        1 => cond_var[r],
        _ => cond_mean[r] * cond_var[r],
    });
    let xtx = x.transpose() * &x;
    if linalg::condition_number(&xtx) > 1.0 / linalg::RCOND_FLOOR {
        return Err(Error::Singular("predictive regressors are collinear".into()));
    }
    let xtx_inv = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("predictive regressors are collinear".into()))?;
    let df = (n - 3) as f64;
    (0..targets.ncols())
        .map(|a| {
            let y = DVector::from_fn(n, |r, _| (r + 1..r + 1 + horizon).map(|s| targets[(s, a)]).sum::<f64>());
            let beta = &xtx_inv * (x.transpose() * &y);
            let u = &y - &x * &beta;
            let ssr = u.norm_squared();
            let ym = y.mean();
            let sst: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
            let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };
            let s = newey_west(&x, u.as_slice(), hac_lags);
            let hac = &xtx_inv * s * &xtx_inv * (n as f64 / df);
            let ols = &xtx_inv * (ssr / df);
            let (f_stat, p_value) = wald_slopes(&beta, &hac, df)?;
            let (ols_f_stat, ols_p_value) = wald_slopes(&beta, &ols, df)?;
            Ok(PredictiveResult {
                target: names[a].clone(),
                n_obs: n,
                coefficients: [beta[0], beta[1], beta[2]],
                hac_se: [0, 1, 2].map(|k| hac[(k, k)].max(0.0).sqrt()),
                r2,
                f_stat,
                p_value,
                ols_f_stat,
                ols_p_value,
            })
        })
        .collect()
}

/// Log returns from simple returns quoted in percent.
pub fn log_returns_from_percent(simple: &DMatrix<f64>) -> DMatrix<f64> {
    simple.map(|r| (1.0 + r / 100.0).ln())
}
