//! Time-series layer: Normal-inverse-Wishart posterior of the stacked
//! return/factor vector and the cross-sectional inputs derived from a draw.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::ReturnPanel;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDraw {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

/// Slices of a time-series draw consumed by the cross-sectional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionInputs {
    pub mu_r: DVector<f64>,
    pub sigma_r: DMatrix<f64>,
    /// `[1_N, C_f]`, or just `C_f` without an intercept.
    pub c: DMatrix<f64>,
    /// Asset-factor correlations, `N x K`.
    pub rho: DMatrix<f64>,
    /// Factor covariance block `K x K` of the same draw.
    pub sigma_f: DMatrix<f64>,
    pub include_intercept: bool,
}

impl CrossSectionInputs {
    pub fn n_assets(&self) -> usize {
        self.mu_r.len()
    }

    pub fn n_factors(&self) -> usize {
        self.rho.ncols()
    }

    /// Dimension of the lambda vector.
    pub fn dim(&self) -> usize {
        self.c.ncols()
    }

    /// Factor covariance columns `C_f` (without the intercept column).
    pub fn c_f(&self) -> DMatrix<f64> {
        let off = usize::from(self.include_intercept);
        self.c.columns(off, self.c.ncols() - off).into_owned()
    }
}

/// Sufficient statistics of the time-series posterior for one panel.
#[derive(Debug, Clone)]
pub struct TsPosterior {
    t: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    scatter_factor: DMatrix<f64>,
}

impl TsPosterior {
    pub fn new(panel: &ReturnPanel) -> Result<TsPosterior> {
        let y = panel.y_matrix();
        let t = y.nrows();
        let p = y.ncols();
        if t < p + 3 {
            return Err(Error::InsufficientData(format!("T = {t} < p + 3 = {}", p + 3)));
        }
        let mean = stats::column_means(&y);
        let scatter = stats::sample_covariance(&y) * (t as f64 - 1.0);
        let chol = linalg::cholesky(&scatter, "scatter matrix").map_err(|e| match e {
            Error::NotPositiveDefinite { condition, .. } => Error::Singular(format!(
                "scatter matrix of the stacked returns/factors is singular (condition number ~ {condition:.3e}); check for duplicated or collinear columns"
            )),
            other => other,
        })?;
        Ok(TsPosterior {
            t,
            mean,
            scatter,
            scatter_factor: chol.unpack(),
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    /// Sample moments `(mu_hat, S / (T - 1))` packaged as a draw.
    pub fn sample_moments(&self) -> TimeSeriesDraw {
        TimeSeriesDraw {
            mu: self.mean.clone(),
            sigma: &self.scatter / (self.t as f64 - 1.0),
        }
    }

    /// One draw of `(mu_Y, Sigma_Y)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TimeSeriesDraw {
        let p = self.dim();
        let nu = (self.t - 1) as f64;
        // Bartlett factor of a Wishart(nu, S^{-1}) draw.
        let mut a = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            let chi = ChiSquared::new(nu - i as f64).expect("nu > p - 1");
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        // G = L_S A^{-T}, Sigma = G G'.
        let g_t = a
            .solve_lower_triangular(&self.scatter_factor.transpose())
            .expect("bartlett diagonal is positive");
        let mut sigma = g_t.tr_mul(&g_t);
        linalg::symmetrize(&mut sigma);
        let z = DVector::<f64>::from_fn(p, |_, _| rng.sample(StandardNormal));
        let mu = &self.mean + g_t.tr_mul(&z) / (self.t as f64).sqrt();
        TimeSeriesDraw { mu, sigma }
    }
}

/// One posterior draw of `(mu_Y, Sigma_Y)` for `panel`.
pub fn sample_ts_params<R: Rng + ?Sized>(panel: &ReturnPanel, rng: &mut R) -> Result<TimeSeriesDraw> {
    Ok(TsPosterior::new(panel)?.draw(rng))
}

/// Slice `(mu_R, Sigma_R, C, rho, Sigma_f)` out of a time-series draw.
pub fn extract_cross_section(
    draw: &TimeSeriesDraw,
    panel: &ReturnPanel,
    include_intercept: bool,
) -> Result<CrossSectionInputs> {
    let p = panel.y_dim();
    if draw.mu.len() != p || draw.sigma.shape() != (p, p) {
        return Err(Error::Dimension(format!(
            "draw has dimension {} but the panel stacks {p} series",
            draw.mu.len()
        )));
    }
    let n = panel.n_assets();
    let pos = panel.factor_positions_in_y();
    let k = pos.len();
    let s = &draw.sigma;
    let off = usize::from(include_intercept);
    let mut c = DMatrix::zeros(n, k + off);
    if include_intercept {
        c.column_mut(0).fill(1.0);
    }
    let mut rho = DMatrix::zeros(n, k);
    for (j, &pj) in pos.iter().enumerate() {
        let sd_f = s[(pj, pj)].sqrt();
        for i in 0..n {
            let cov = s[(i, pj)];
            c[(i, j + off)] = cov;
            rho[(i, j)] = (cov / (s[(i, i)].sqrt() * sd_f)).clamp(-1.0, 1.0);
        }
    }
    let sigma_f = DMatrix::from_fn(k, k, |a, b| s[(pos[a], pos[b])]);
    Ok(CrossSectionInputs {
        mu_r: draw.mu.rows(0, n).into_owned(),
        sigma_r: s.view((0, 0), (n, n)).into_owned(),
        c,
        rho,
        sigma_f,
        include_intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{synthetic_dates, AssetClass, FactorMeta};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_panel(t: usize, n: usize, k: usize, seed: u64) -> ReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = DMatrix::from_fn(t, n, |_, _| rng.sample::<f64, _>(StandardNormal) + 0.1);
        let f = DMatrix::from_fn(t, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let meta = (0..k)
            .map(|j| FactorMeta::new(format!("f{j}"), false, AssetClass::Nontradable))
            .collect();
        ReturnPanel::new(
            synthetic_dates(1970, t),
            (0..n).map(|i| format!("r{i}")).collect(),
            r,
            f,
            meta,
        )
        .unwrap()
    }

    #[test]
    fn inverse_wishart_mean_matches_analytic() {
        let panel = random_panel(20, 2, 1, 11);
        let post = TsPosterior::new(&panel).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = post.dim();
        let n_draws = 50_000;
        let mut acc = DMatrix::zeros(p, p);
        let mut mu_acc = DVector::zeros(p);
        for _ in 0..n_draws {
            let d = post.draw(&mut rng);
            acc += &d.sigma;
            mu_acc += &d.mu;
        }
        acc /= n_draws as f64;
        mu_acc /= n_draws as f64;
        let expected = post.scatter() / (post.t() as f64 - 1.0 - p as f64 - 1.0);
        for i in 0..p {
            let rel = (acc[(i, i)] - expected[(i, i)]).abs() / expected[(i, i)];
            assert!(rel < 0.02, "diag {i}: {} vs {}", acc[(i, i)], expected[(i, i)]);
        }
        // mean of mu is the sample mean; se from the marginal variance
        for i in 0..p {
            let se = (expected[(i, i)] / post.t() as f64 / n_draws as f64).sqrt();
            assert!((mu_acc[i] - post.sample_mean()[i]).abs() < 3.0 * se);
        }
    }

    #[test]
    fn duplicated_column_is_singular() {
        let base = random_panel(30, 2, 1, 5);
        let mut r = base.returns().clone();
        let c0 = r.column(0).into_owned();
        r.column_mut(1).copy_from(&c0);
        let p = ReturnPanel::new(
            base.dates().to_vec(),
            base.asset_names().to_vec(),
            r,
            base.factors().clone(),
            base.factor_meta().to_vec(),
        )
        .unwrap();
        assert!(matches!(TsPosterior::new(&p), Err(Error::Singular(_))));
    }

    #[test]
    fn read_off_two_by_two() {
        let panel = random_panel(10, 1, 1, 1);
        let draw = TimeSeriesDraw {
            mu: DVector::from_vec(vec![0.1, 0.2]),
            sigma: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        };
        let cs = extract_cross_section(&draw, &panel, true).unwrap();
        assert_eq!(cs.c[(0, 0)], 1.0);
        assert_eq!(cs.c[(0, 1)], 0.5);
        assert_eq!(cs.rho[(0, 0)], 0.5);
        let diag = TimeSeriesDraw {
            mu: draw.mu.clone(),
            sigma: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])),
        };
        let cs = extract_cross_section(&diag, &panel, false).unwrap();
        assert_eq!(cs.rho[(0, 0)], 0.0);
        assert_eq!(cs.c.ncols(), 1);
    }

    #[test]
    fn correlations_match_brute_force() {
        let panel = random_panel(40, 3, 2, 9);
        let post = TsPosterior::new(&panel).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = post.draw(&mut rng);
        let cs = extract_cross_section(&d, &panel, true).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let pj = 3 + j;
                let oracle = d.sigma[(i, pj)] / (d.sigma[(i, i)] * d.sigma[(pj, pj)]).sqrt();
                assert!((cs.rho[(i, j)] - oracle).abs() < 1e-14);
            }
        }
        assert!(linalg::cholesky(&cs.sigma_r, "sigma_r").is_ok());
    }

    #[test]
    fn posterior_concentrates_with_replicated_data() {
        let small = random_panel(20, 2, 1, 21);
        let reps = 100;
        let t = small.t() * reps;
        let big = ReturnPanel::new(
            synthetic_dates(1000, t),
            small.asset_names().to_vec(),
            DMatrix::from_fn(t, 2, |r, c| small.returns()[(r % 20, c)]),
            DMatrix::from_fn(t, 1, |r, c| small.factors()[(r % 20, c)]),
            small.factor_meta().to_vec(),
        )
        .unwrap();
        let spread = |panel: &ReturnPanel| {
            let post = TsPosterior::new(panel).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let xs: Vec<f64> = (0..4000).map(|_| post.draw(&mut rng).mu[0]).collect();
            stats::std_dev(&xs)
        };
        let ratio = spread(&small) / spread(&big);
        assert!(ratio > 7.0 && ratio < 14.0, "ratio {ratio}");
    }
}
