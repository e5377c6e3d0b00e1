//! Cross-sectional pricing diagnostics for an SDF or a vector of premia.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bma::{sdf_series_with_means, SdfMode};
use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::linalg;
use crate::panel::ReturnPanel;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingReport {
    pub label: String,
    pub n_assets: usize,
    pub rmse: f64,
    pub mape: f64,
    pub r2_ols: f64,
    pub r2_gls: f64,
    /// Fit of a regression with unit slope and no intercept.
    pub constrained_r2: f64,
}

/// Premia implied by an SDF: `-cov(M, R_i)` for each asset.
pub fn implied_premia(sdf: &[f64], returns: &DMatrix<f64>) -> Result<DVector<f64>> {
    let t = sdf.len();
    if returns.nrows() != t {
        return Err(Error::Dimension(format!(
            "SDF has {t} observations, returns {}",
            returns.nrows()
        )));
    }
    if t < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 observations, got {t}"
        )));
    }
    let m = DMatrix::from_column_slice(t, 1, sdf);
    Ok(-stats::cross_covariance(returns, &m).column(0).into_owned())
}

/// Fit statistics of `predicted` against `realized` premia.
pub fn cross_section_fit(
    predicted: &DVector<f64>,
    realized: &DVector<f64>,
    sigma_r: &DMatrix<f64>,
    label: &str,
) -> Result<PricingReport> {
    let n = realized.len();
    if predicted.len() != n || sigma_r.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "{} predicted, {n} realized premia and a {:?} covariance",
            predicted.len(),
            sigma_r.shape()
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientData("need at least two test assets".into()));
    }
    let alpha = realized - predicted;
    let mean_r = realized.mean();
    let demeaned = realized.add_scalar(-mean_r);
    let dispersion = demeaned.norm_squared();
    if !(dispersion > f64::EPSILON * realized.norm_squared()) {
        return Err(Error::Undefined(
            "realized premia have no cross-sectional dispersion; R^2 is undefined".into(),
        ));
    }
    let chol = linalg::cholesky(sigma_r, "test-asset covariance")?;
    let gls_den = linalg::inv_quad_form(&chol, &demeaned);
    let ss = alpha.norm_squared();
    Ok(PricingReport {
        label: label.to_string(),
        n_assets: n,
        rmse: (ss / n as f64).sqrt(),
        mape: alpha.iter().map(|a| a.abs()).sum::<f64>() / n as f64,
        r2_ols: 1.0 - ss / dispersion,
        r2_gls: 1.0 - linalg::inv_quad_form(&chol, &alpha) / gls_den,
        constrained_r2: 1.0 - ss / realized.norm_squared(),
    })
}

/// Report for an SDF series priced on the assets of `returns`, against their
/// sample means and sample covariance.
pub fn sdf_report(sdf: &[f64], returns: &DMatrix<f64>, label: &str) -> Result<PricingReport> {
    let predicted = implied_premia(sdf, returns)?;
    let realized = stats::column_means(returns);
    let sigma = stats::sample_covariance(returns);
    cross_section_fit(&predicted, &realized, &sigma, label)
}

/// Which sample the GLS weighting matrix comes from out of sample.
#[derive(Debug, Clone, PartialEq)]
pub enum CovRule {
    /// Estimate on the out-of-sample window itself.
    OosWindow,
    /// Use a supplied matrix (e.g. a full-sample estimate).
    Given(DMatrix<f64>),
}

/// An SDF frozen at estimation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenSdf {
    pub factor_names: Vec<String>,
    pub mprs: Vec<f64>,
    pub factor_means: Vec<f64>,
}

impl FrozenSdf {
    /// Freeze posterior mean prices of risk and the factor means of the
    /// training panel.
    pub fn from_posterior(draws: &PosteriorDraws, train: &ReturnPanel) -> FrozenSdf {
        let k = draws.n_factors();
        FrozenSdf {
            factor_names: draws.factor_names.clone(),
            mprs: (0..k).map(|j| stats::mean(&draws.factor_lambda(j))).collect(),
            factor_means: stats::column_means(train.factors()).iter().copied().collect(),
        }
    }

    /// SDF series on another panel, matching factors by name.
    pub fn series(&self, panel: &ReturnPanel) -> Result<Vec<f64>> {
        let idx = self
            .factor_names
            .iter()
            .map(|n| {
                panel
                    .factor_index(n)
                    .ok_or_else(|| Error::Schema(format!("out-of-sample panel lacks factor `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let t = panel.t();
        Ok((0..t)
            .map(|r| {
                1.0 - idx
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| self.mprs[j] * (panel.factors()[(r, c)] - self.factor_means[j]))
                    .sum::<f64>()
            })
            .collect())
    }
}

/// Price the assets of `oos` with a frozen SDF and no re-estimation.
pub fn oos_price(sdf: &FrozenSdf, oos: &ReturnPanel, cov: &CovRule, label: &str) -> Result<PricingReport> {
    let m = sdf.series(oos)?;
    let predicted = implied_premia(&m, oos.returns())?;
    let realized = stats::column_means(oos.returns());
    let sigma = match cov {
        CovRule::OosWindow => stats::sample_covariance(oos.returns()),
        CovRule::Given(s) => s.clone(),
    };
    cross_section_fit(&predicted, &realized, &sigma, label)
}

/// In-sample report of the model-averaged SDF of `draws` on `panel`.
pub fn in_sample_report(draws: &PosteriorDraws, panel: &ReturnPanel, label: &str) -> Result<PricingReport> {
    let means = stats::column_means(panel.factors());
    let m = sdf_series_with_means(draws, panel.factors(), &means, SdfMode::FactorSpace)?;
    sdf_report(&m, panel.returns(), label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 2.0, 0.3, 0.1, 0.3, 1.5])
    }

    #[test]
    fn perfect_prediction() {
        let mu = DVector::from_vec(vec![0.1, 0.3, -0.2]);
        let r = cross_section_fit(&mu, &mu, &sigma3(), "x").unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.mape, 0.0);
        assert_eq!(r.r2_ols, 1.0);
        assert_eq!(r.r2_gls, 1.0);
        assert_eq!(r.constrained_r2, 1.0);
    }

    #[test]
    fn predicting_the_mean_gives_zero_ols_r2() {
        let mu = DVector::from_vec(vec![0.1, 0.3, -0.2]);
        let pred = DVector::from_element(3, mu.mean());
        let r = cross_section_fit(&pred, &mu, &sigma3(), "x").unwrap();
        assert!(r.r2_ols.abs() < 1e-15);
    }

    #[test]
    fn flat_realized_premia_are_undefined() {
        let mu = DVector::from_element(3, 0.2);
        assert!(matches!(
            cross_section_fit(&mu, &mu, &sigma3(), "x"),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn orthogonal_sdf_implies_zero_premia() {
        let m = [1.0, 1.0, 1.0, 1.0];
        let r = DMatrix::from_row_slice(4, 2, &[0.1, 0.3, -0.2, 0.5, 0.4, -0.1, 0.0, 0.2]);
        assert!(implied_premia(&m, &r).unwrap().amax() < 1e-15);
    }

    #[test]
    fn single_factor_self_pricing() {
        let f = [0.5, -0.2, 0.9, 0.1, -0.4];
        let fbar = stats::mean(&f);
        let lambda = 0.7;
        let m: Vec<f64> = f.iter().map(|x| 1.0 - lambda * (x - fbar)).collect();
        let r = DMatrix::from_column_slice(5, 1, &f);
        let p = implied_premia(&m, &r).unwrap();
        assert!((p[0] - lambda * stats::variance(&f)).abs() < 1e-14);
    }
}
