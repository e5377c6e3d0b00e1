//! Posterior summaries and the model-averaged SDF.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::linalg;
use crate::panel::ReturnPanel;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdfMode {
    /// `1 - sum_j E[lambda_j] (f_j - fbar_j)`.
    FactorSpace,
    /// Average of the per-draw SDFs.
    ModelSpace,
}

/// Estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

fn mc(x: &[f64]) -> McEstimate {
    McEstimate {
        mean: stats::mean(x),
        se: stats::batch_means_se(x),
    }
}

fn non_empty(draws: &PosteriorDraws) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("posterior has no retained draws".into()));
    }
    Ok(())
}

/// Posterior inclusion probability of each factor.
pub fn factor_probabilities(draws: &PosteriorDraws) -> Result<Vec<McEstimate>> {
    non_empty(draws)?;
    Ok((0..draws.n_factors())
        .map(|j| mc(&stats::column(&draws.gamma, j)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MprSummary {
    pub mprs: Vec<McEstimate>,
    /// Mean price of risk over draws that include the factor; `None` if
    /// the factor was never included.
    pub conditional_mprs: Vec<Option<f64>>,
}

/// Unconditional and inclusion-conditional posterior prices of risk.
pub fn posterior_mprs(draws: &PosteriorDraws) -> Result<MprSummary> {
    non_empty(draws)?;
    let k = draws.n_factors();
    let mut mprs = Vec::with_capacity(k);
    let mut conditional = Vec::with_capacity(k);
    for j in 0..k {
        let lam = draws.factor_lambda(j);
        mprs.push(mc(&lam));
        let (sum, count) = lam
            .iter()
            .enumerate()
            .filter(|(i, _)| draws.gamma_of(*i, j))
            .fold((0.0, 0usize), |(s, c), (_, v)| (s + v, c + 1));
        conditional.push((count > 0).then(|| sum / count as f64));
    }
    Ok(MprSummary {
        mprs,
        conditional_mprs: conditional,
    })
}

/// `E[lambda_j] - E[lambda_j | gamma_j = 1] Pr(gamma_j = 1)` for each factor,
/// with the Monte Carlo standard error of `E[lambda_j]`.
pub fn averaging_identity_gaps(draws: &PosteriorDraws) -> Result<Vec<(f64, f64)>> {
    let probs = factor_probabilities(draws)?;
    let m = posterior_mprs(draws)?;
    Ok((0..draws.n_factors())
        .map(|j| {
            let cond = m.conditional_mprs[j].unwrap_or(0.0);
            (m.mprs[j].mean - cond * probs[j].mean, m.mprs[j].se)
        })
        .collect())
}

/// Model-averaged SDF over the rows of `factors`, centering each factor at
/// `factor_means`.
pub fn sdf_series_with_means(
    draws: &PosteriorDraws,
    factors: &DMatrix<f64>,
    factor_means: &DVector<f64>,
    mode: SdfMode,
) -> Result<Vec<f64>> {
    non_empty(draws)?;
    let k = draws.n_factors();
    if factors.ncols() != k || factor_means.len() != k {
        return Err(Error::Dimension(format!(
            "{} factor columns and {} means for {k} factors in the posterior",
            factors.ncols(),
            factor_means.len()
        )));
    }
    let mut centered = factors.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-factor_means[j]);
    }
    let off = draws.offset();
    let lam_f = draws.lambda.columns(off, k);
    let m = match mode {
        SdfMode::FactorSpace => {
            let mean = DVector::from_fn(k, |j, _| lam_f.column(j).mean());
            &centered * mean
        }
        SdfMode::ModelSpace => {
            let mut acc = DVector::zeros(factors.nrows());
            for i in 0..draws.len() {
                acc += &centered * lam_f.row(i).transpose();
            }
            acc / draws.len() as f64
        }
    };
    Ok(m.iter().map(|v| 1.0 - v).collect())
}

/// In-sample model-averaged SDF, centering factors at their sample means.
pub fn bma_sdf_series(draws: &PosteriorDraws, panel: &ReturnPanel, mode: SdfMode) -> Result<Vec<f64>> {
    let means = stats::column_means(panel.factors());
    sdf_series_with_means(draws, panel.factors(), &means, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSharpe {
    pub factors: Vec<usize>,
    /// Posterior mean of the subset's Sharpe ratio.
    pub sr: f64,
    /// Posterior mean of the subset's share of the squared SDF Sharpe ratio.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpeDecomposition {
    pub subsets: Vec<SubsetSharpe>,
    pub sdf_sr_mean: f64,
    pub sdf_sr_q05: f64,
    pub sdf_sr_q50: f64,
    pub sdf_sr_q95: f64,
    /// Draws that carried a stored factor covariance.
    pub n_draws_used: usize,
}

/// `lambda_S' Sigma_{f,S} lambda_S` for the factors in `subset`.
pub fn subset_sr2(lambda_f: &[f64], cov: &DMatrix<f64>, subset: &[usize]) -> f64 {
    let mut s = 0.0;
    for &a in subset {
        for &b in subset {
            s += lambda_f[a] * cov[(a, b)] * lambda_f[b];
        }
    }
    s.max(0.0)
}

/// Sharpe ratios attributable to factor subsets, evaluated draw by draw with
/// the factor covariance of the same time-series draw.
pub fn sdf_sharpe_decomposition(draws: &PosteriorDraws, subsets: &[Vec<usize>]) -> Result<SharpeDecomposition> {
    non_empty(draws)?;
    let k = draws.n_factors();
    if let Some(bad) = subsets.iter().flatten().find(|&&j| j >= k) {
        return Err(Error::InvalidArgument(format!("factor index {bad} out of range")));
    }
    if draws.factor_cov.is_empty() {
        return Err(Error::InvalidArgument("posterior stores no factor covariances".into()));
    }
    let all: Vec<usize> = (0..k).collect();
    let off = draws.offset();
    let mut sr_sum = vec![0.0; subsets.len()];
    let mut share_sum = vec![0.0; subsets.len()];
    let mut share_n = vec![0usize; subsets.len()];
    for stored in &draws.factor_cov {
        let cov = linalg::unpack_upper(&stored.packed, k);
        let lam: Vec<f64> = (0..k).map(|j| draws.lambda[(stored.draw, j + off)]).collect();
        let total = subset_sr2(&lam, &cov, &all);
        for (s, subset) in subsets.iter().enumerate() {
            let sr2 = subset_sr2(&lam, &cov, subset);
            sr_sum[s] += sr2.sqrt();
            if total > 0.0 {
                share_sum[s] += sr2 / total;
                share_n[s] += 1;
            }
        }
    }
    let n = draws.factor_cov.len();
    let subsets_out = subsets
        .iter()
        .enumerate()
        .map(|(s, f)| SubsetSharpe {
            factors: f.clone(),
            sr: sr_sum[s] / n as f64,
            share: if share_n[s] > 0 {
                share_sum[s] / share_n[s] as f64
            } else {
                f64::NAN
            },
        })
        .collect();
    let mut sorted = draws.sdf_sr.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(SharpeDecomposition {
        subsets: subsets_out,
        sdf_sr_mean: stats::mean(&sorted),
        sdf_sr_q05: stats::quantile_sorted(&sorted, 0.05),
        sdf_sr_q50: stats::quantile_sorted(&sorted, 0.5),
        sdf_sr_q95: stats::quantile_sorted(&sorted, 0.95),
        n_draws_used: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimensionality {
    /// `histogram[m]` counts draws with exactly `m` included factors.
    pub histogram: Vec<usize>,
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

pub fn dimensionality_distribution(draws: &PosteriorDraws) -> Result<Dimensionality> {
    non_empty(draws)?;
    let mut histogram = vec![0; draws.n_factors() + 1];
    for &m in &draws.model_size {
        histogram[m] += 1;
    }
    let mut sizes: Vec<f64> = draws.model_size.iter().map(|&m| m as f64).collect();
    sizes.sort_by(f64::total_cmp);
    Ok(Dimensionality {
        histogram,
        mean: stats::mean(&sizes),
        q05: stats::quantile_sorted(&sizes, 0.05),
        q50: stats::quantile_sorted(&sizes, 0.5),
        q95: stats::quantile_sorted(&sizes, 0.95),
    })
}

/// Indices of the `n` most likely factors; ties go to the larger |mpr|.
pub fn top_factors(probs: &[f64], mprs: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| {
        probs[b]
            .total_cmp(&probs[a])
            .then(mprs[b].abs().total_cmp(&mprs[a].abs()))
            .then(a.cmp(&b))
    });
    idx.truncate(n);
    idx
}

/// Full set of posterior summaries for one estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmaSdf {
    pub factor_names: Vec<String>,
    pub factor_probs: Vec<McEstimate>,
    pub mprs: Vec<McEstimate>,
    pub conditional_mprs: Vec<Option<f64>>,
    pub sdf_series: Vec<f64>,
    pub sr_posterior: Vec<f64>,
    pub dimensionality: Dimensionality,
}

impl BmaSdf {
    pub fn from_draws(draws: &PosteriorDraws, panel: &ReturnPanel) -> Result<BmaSdf> {
        let m = posterior_mprs(draws)?;
        Ok(BmaSdf {
            factor_names: draws.factor_names.clone(),
            factor_probs: factor_probabilities(draws)?,
            mprs: m.mprs,
            conditional_mprs: m.conditional_mprs,
            sdf_series: bma_sdf_series(draws, panel, SdfMode::FactorSpace)?,
            sr_posterior: draws.sdf_sr.clone(),
            dimensionality: dimensionality_distribution(draws)?,
        })
    }

    pub fn prob_means(&self) -> Vec<f64> {
        self.factor_probs.iter().map(|p| p.mean).collect()
    }

    pub fn mpr_means(&self) -> Vec<f64> {
        self.mprs.iter().map(|p| p.mean).collect()
    }
}
