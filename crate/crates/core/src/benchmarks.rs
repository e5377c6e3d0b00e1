//! Frequentist comparison estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::ReturnPanel;
use crate::pricing::{cross_section_fit, PricingReport};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlsFit {
    /// Intercept first when present, then one price of risk per factor.
    pub lambda: Vec<f64>,
    pub include_intercept: bool,
    /// SDF-implied premia `C_f lambda_f`.
    pub premia: Vec<f64>,
    pub report: PricingReport,
}

/// `(lambda, cov(R, f), mean returns, return covariance)`.
pub type GlsMoments = (DVector<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>);

/// GLS cross-sectional estimate `(C'S^{-1}C)^{-1} C'S^{-1} mu` from sample
/// moments, with `C = [1, cov(R, f)]` or `cov(R, f)`.
pub fn gls_lambda(factors: &DMatrix<f64>, returns: &DMatrix<f64>, include_intercept: bool) -> Result<GlsMoments> {
    if factors.nrows() != returns.nrows() {
        return Err(Error::Dimension(format!(
            "factors have {} rows, returns {}",
            factors.nrows(),
            returns.nrows()
        )));
    }
    if factors.ncols() == 0 {
        return Err(Error::InvalidArgument("need at least one factor".into()));
    }
    let n = returns.ncols();
    let cf = stats::cross_covariance(returns, factors);
    let off = usize::from(include_intercept);
    let mut c = DMatrix::zeros(n, cf.ncols() + off);
    if include_intercept {
        c.column_mut(0).fill(1.0);
    }
    c.columns_mut(off, cf.ncols()).copy_from(&cf);
    let mu = stats::column_means(returns);
    let sigma = stats::sample_covariance(returns);
    let chol = linalg::cholesky(&sigma, "test-asset covariance")?;
    let sinv_c = chol.solve(&c);
    let a = c.tr_mul(&sinv_c);
    let b = sinv_c.tr_mul(&mu);
    let lambda = linalg::spd_solve(&a, &b, "GLS normal equations").map_err(|_| {
        Error::Singular("factor loadings are collinear or carry no covariance with the test assets".into())
    })?;
    Ok((lambda, cf, mu, sigma))
}

/// GLS-GMM factor model estimate and its pricing report.
pub fn gls_gmm(factors: &DMatrix<f64>, panel: &ReturnPanel, include_intercept: bool, label: &str) -> Result<GlsFit> {
    let (lambda, cf, mu, sigma) = gls_lambda(factors, panel.returns(), include_intercept)?;
    let off = usize::from(include_intercept);
    let lf = lambda.rows(off, cf.ncols());
    let premia = &cf * lf;
    let report = cross_section_fit(&premia, &mu, &sigma, label)?;
    Ok(GlsFit {
        lambda: lambda.iter().copied().collect(),
        include_intercept,
        premia: premia.iter().copied().collect(),
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeGrid {
    pub shrinkage: Vec<f64>,
    pub components: Vec<usize>,
}

impl RidgeGrid {
    /// Log-spaced shrinkage levels and component counts `1..=max_components`.
    pub fn default_for(n_assets: usize) -> RidgeGrid {
        RidgeGrid {
            shrinkage: (0..13).map(|i| 10f64.powf(-4.0 + 0.5 * i as f64)).collect(),
            components: (1..=n_assets.min(20)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldSplit {
    /// First half versus second half of the sample.
    Halves,
    /// Both folds are the full sample (degenerate check).
    Identical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    /// SDF weights on the (demeaned) asset returns.
    pub weights: Vec<f64>,
    pub shrinkage: f64,
    pub components: usize,
    pub cv_score: f64,
    pub report: PricingReport,
}

struct Moments {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    order: Vec<usize>,
}

impl Moments {
    fn new(returns: &DMatrix<f64>) -> Moments {
        let mu = stats::column_means(returns);
        let sigma = stats::sample_covariance(returns);
        let eig = sigma.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..mu.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        Moments { mu, sigma, eig, order }
    }

    /// `b = Q_k (Lambda_k + gamma I)^{-1} Q_k' mu`.
    fn weights(&self, gamma: f64, k: usize) -> DVector<f64> {
        let mut b = DVector::zeros(self.mu.len());
        for &i in self.order.iter().take(k) {
            let q = self.eig.eigenvectors.column(i);
            let ev = self.eig.eigenvalues[i].max(0.0);
            b += q * (q.dot(&self.mu) / (ev + gamma));
        }
        b
    }
}

fn r2_ols(predicted: &DVector<f64>, realized: &DVector<f64>) -> f64 {
    let demeaned = realized.add_scalar(-realized.mean());
    1.0 - (realized - predicted).norm_squared() / demeaned.norm_squared()
}

/// Ridge SDF on principal components, hyperparameters by two-fold
/// cross-validation of the out-of-fold OLS R^2, then refit on the full sample.
pub fn ridge_sdf_cv(panel: &ReturnPanel, grid: &RidgeGrid, split: FoldSplit) -> Result<RidgeFit> {
    if grid.shrinkage.is_empty() || grid.components.is_empty() {
        return Err(Error::Config("ridge grid is empty".into()));
    }
    let n = panel.n_assets();
    if grid.components.iter().any(|&k| k == 0 || k > n) {
        return Err(Error::Config(format!("component counts must lie in 1..={n}")));
    }
    if grid.shrinkage.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::Config("shrinkage levels must be nonnegative".into()));
    }
    let r = panel.returns();
    let t = panel.t();
    let (a, b) = match split {
        FoldSplit::Halves => {
            let h = t / 2;
            if h < 2 || t - h < 2 {
                return Err(Error::InsufficientData(format!("T = {t} too short to split")));
            }
            (r.rows(0, h).into_owned(), r.rows(h, t - h).into_owned())
        }
        FoldSplit::Identical => (r.clone(), r.clone()),
    };
    let (ma, mb) = (Moments::new(&a), Moments::new(&b));
    let points: Vec<(f64, usize)> = grid
        .components
        .iter()
        .flat_map(|&k| grid.shrinkage.iter().map(move |&g| (g, k)))
        .collect();
    let scores: Vec<f64> = points
        .par_iter()
        .map(|&(g, k)| {
            let s1 = r2_ols(&(&mb.sigma * ma.weights(g, k)), &mb.mu);
            let s2 = r2_ols(&(&ma.sigma * mb.weights(g, k)), &ma.mu);
            0.5 * (s1 + s2)
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.is_finite() && (!scores[best].is_finite() || *s > scores[best]) {
            best = i;
        }
    }
    let (gamma, k) = points[best];
    let full = Moments::new(r);
    let w = full.weights(gamma, k);
    let report = cross_section_fit(&(&full.sigma * &w), &full.mu, &full.sigma, "ridge")?;
    Ok(RidgeFit {
        weights: w.iter().copied().collect(),
        shrinkage: gamma,
        components: k,
        cv_score: scores[best],
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpPcaFit {
    /// Loadings on the asset returns, `N x n`.
    pub eigenvectors: DMatrix<f64>,
    /// Factor returns, `T x n`.
    pub factors: DMatrix<f64>,
    pub pricing: GlsFit,
}

/// Risk-premium PCA: top eigenvectors of `X'X/T + gamma xbar xbar'`, with the
/// resulting factors priced by GLS without an intercept.
#[cfg(feature = "rppca")]
pub fn rp_pca(panel: &ReturnPanel, n_components: usize, gamma: f64) -> Result<RpPcaFit> {
    let x = panel.returns();
    let t = x.nrows() as f64;
    let n = x.ncols();
    if n_components == 0 || n_components > n {
        return Err(Error::InvalidArgument(format!(
            "n_components = {n_components} must lie in 1..={n}"
        )));
    }
    let xbar = stats::column_means(x);
    let m = x.tr_mul(x) / t + &xbar * xbar.transpose() * gamma;
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].abs();
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > 1e-12 * top).count();
    if n_components > rank {
        return Err(Error::Singular(format!(
            "requested {n_components} components but the second-moment matrix has rank {rank}"
        )));
    }
    let q = DMatrix::from_fn(n, n_components, |i, j| {
        let v = eig.eigenvectors[(i, order[j])];
        // sign convention: positive loading sum
        let s: f64 = eig.eigenvectors.column(order[j]).sum();
        if s < 0.0 {
            -v
        } else {
            v
        }
    });
    let factors = x * &q;
    let pricing = gls_gmm(&factors, panel, false, "rppca")?;
    Ok(RpPcaFit {
        eigenvectors: q,
        factors,
        pricing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{synthetic_dates, AssetClass, FactorMeta};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn panel_from(returns: DMatrix<f64>) -> ReturnPanel {
        let t = returns.nrows();
        let n = returns.ncols();
        let f = returns.column(0).into_owned();
        ReturnPanel::new(
            synthetic_dates(1900, t),
            (0..n).map(|i| format!("a{i}")).collect(),
            returns,
            DMatrix::from_column_slice(t, 1, f.as_slice()),
            vec![FactorMeta::new("a0", true, AssetClass::Stock)],
        )
        .unwrap()
    }

    fn gaussian(t: usize, n: usize, seed: u64, mean: f64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, n, |_, _| mean + rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn self_pricing_factor() {
        let r = gaussian(200, 1, 1, 0.3);
        let (lambda, ..) = gls_lambda(&r, &r, false).unwrap();
        let f = stats::column(&r, 0);
        assert!((lambda[0] - stats::mean(&f) / stats::variance(&f)).abs() < 1e-12);
    }

    #[test]
    fn factor_without_covariance_is_singular() {
        let r = gaussian(50, 3, 2, 0.1);
        let zero = DMatrix::from_element(50, 1, 0.0);
        assert!(matches!(gls_lambda(&zero, &r, true), Err(Error::Singular(_))));
    }

    #[test]
    fn matches_dense_oracle() {
        let r = gaussian(120, 4, 3, 0.2);
        let f = gaussian(120, 2, 4, 0.0) + r.columns(0, 2) * 0.5;
        let (lambda, ..) = gls_lambda(&f, &r, true).unwrap();
        let cf = stats::cross_covariance(&r, &f);
        let mut c = DMatrix::from_element(4, 3, 1.0);
        c.columns_mut(1, 2).copy_from(&cf);
        let s_inv = stats::sample_covariance(&r).try_inverse().unwrap();
        let mu = stats::column_means(&r);
        let oracle = (c.transpose() * &s_inv * &c).try_inverse().unwrap() * c.transpose() * &s_inv * mu;
        assert!((lambda - oracle).amax() < 1e-10);
    }

    #[test]
    fn unpenalized_full_rank_ridge_on_identical_folds_fits_exactly() {
        let p = panel_from(gaussian(80, 4, 5, 0.1));
        let grid = RidgeGrid {
            shrinkage: vec![0.0],
            components: vec![4],
        };
        let fit = ridge_sdf_cv(&p, &grid, FoldSplit::Identical).unwrap();
        assert!((fit.report.r2_ols - 1.0).abs() < 1e-10);
        let sigma = stats::sample_covariance(p.returns());
        let gls = sigma.try_inverse().unwrap() * stats::column_means(p.returns());
        for (w, g) in fit.weights.iter().zip(gls.iter()) {
            assert!((w - g).abs() < 1e-8);
        }
    }

    #[test]
    fn pure_noise_prefers_heavy_shrinkage() {
        let p = panel_from(gaussian(400, 10, 6, 0.0));
        let grid = RidgeGrid::default_for(10);
        let fit = ridge_sdf_cv(&p, &grid, FoldSplit::Halves).unwrap();
        let median = stats::median(&grid.shrinkage);
        assert!(fit.shrinkage >= median, "chose {}", fit.shrinkage);
    }

    #[test]
    fn empty_grid_is_a_config_error() {
        let p = panel_from(gaussian(40, 3, 7, 0.0));
        let grid = RidgeGrid {
            shrinkage: vec![],
            components: vec![1],
        };
        assert!(matches!(
            ridge_sdf_cv(&p, &grid, FoldSplit::Halves),
            Err(Error::Config(_))
        ));
    }

    #[cfg(feature = "rppca")]
    #[test]
    fn rppca_limits() {
        let mut r = gaussian(300, 5, 8, 0.0);
        r.column_mut(2).add_scalar_mut(3.0);
        let p = panel_from(r.clone());
        let fit = rp_pca(&p, 1, 1e8).unwrap();
        let xbar = stats::column_means(&r);
        let cos = fit.eigenvectors.column(0).dot(&xbar).abs() / xbar.norm();
        assert!(cos >= 0.99);
        let full = rp_pca(&p, 5, 20.0).unwrap();
        assert!((full.pricing.report.r2_ols - 1.0).abs() < 1e-8);
        // gamma = 0 is PCA of the uncentered second moment
        let pca = rp_pca(&p, 2, 0.0).unwrap();
        let m = r.tr_mul(&r) / 300.0;
        let v = pca.eigenvectors.column(0);
        let mv = &m * v;
        let ev = v.dot(&mv);
        assert!((mv - v * ev).amax() < 1e-8);
        assert!(rp_pca(&p, 6, 20.0).is_err());
    }
}
