//! Spike-and-slab prior: correlation-based penalties, the diagonal prior
//! precision, Beta sparsity hyperparameters and Sharpe-ratio calibration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ts_layer::CrossSectionInputs;

/// How the global penalty scale `psi` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiSpec {
    /// Use this value directly.
    Fixed(f64),
    /// Calibrate so that the prior expected Sharpe ratio of the factors is
    /// this fraction of the ex post maximum Sharpe ratio of the test assets.
    SrFraction(f64),
}

/// Prior on the cross-sectional scale `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPrior {
    /// `pi(sigma^2) ∝ 1 / sigma^2`.
    Jeffreys,
    /// Proper inverse-Gamma with the given shape and scale, for diagnostics.
    InverseGamma { shape: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub psi: PsiSpec,
    /// Spike-to-slab variance ratio.
    pub r: f64,
    pub a_omega: f64,
    pub b_omega: f64,
    /// Prior precision of the common intercept.
    pub intercept_precision: f64,
    pub include_intercept: bool,
    /// Penalize on raw rather than cross-sectionally demeaned correlations.
    pub level_factor_mode: bool,
    /// Compute correlations once from the sample instead of per draw.
    pub psi_from_sample: bool,
    pub sigma_prior: SigmaPrior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            psi: PsiSpec::SrFraction(0.8),
            r: 0.001,
            a_omega: 1.0,
            b_omega: 1.0,
            intercept_precision: 1e-6,
            include_intercept: true,
            level_factor_mode: false,
            psi_from_sample: false,
            sigma_prior: SigmaPrior::Jeffreys,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self.psi {
            PsiSpec::Fixed(p) if !(p > 0.0 && p.is_finite()) => return bad(format!("psi must be positive, got {p}")),
            PsiSpec::SrFraction(f) if !(f > 0.0 && f <= 1.0) => {
                return bad(format!("sr_fraction must lie in (0, 1], got {f}"))
            }
            _ => {}
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return bad(format!("r must lie in (0, 1), got {}", self.r));
        }
        if !(self.a_omega > 0.0 && self.b_omega > 0.0) {
            return bad(format!(
                "a_omega and b_omega must be positive, got ({}, {})",
                self.a_omega, self.b_omega
            ));
        }
        if !(self.intercept_precision >= 0.0 && self.intercept_precision.is_finite()) {
            return bad(format!(
                "intercept precision must be nonnegative, got {}",
                self.intercept_precision
            ));
        }
        if self.level_factor_mode && self.include_intercept {
            return bad("level_factor_mode requires include_intercept = false".into());
        }
        if let SigmaPrior::InverseGamma { shape, scale } = self.sigma_prior {
            if !(shape > 0.0 && scale > 0.0) {
                return bad(format!(
                    "sigma prior needs positive shape and scale, got ({shape}, {scale})"
                ));
            }
        }
        Ok(())
    }

    /// Prior mean inclusion probability `a / (a + b)`.
    pub fn prior_inclusion(&self) -> f64 {
        self.a_omega / (self.a_omega + self.b_omega)
    }
}

/// Cross-sectional dispersion (or level) of each factor's correlations.
pub fn correlation_strength(rho: &DMatrix<f64>, level_factor_mode: bool) -> DVector<f64> {
    DVector::from_iterator(
        rho.ncols(),
        rho.column_iter().map(|col| {
            if level_factor_mode {
                col.norm_squared()
            } else {
                let m = col.mean();
                col.iter().map(|v| (v - m).powi(2)).sum()
            }
        }),
    )
}

/// Per-factor penalty scales `psi_j`.
pub fn compute_psi(rho: &DMatrix<f64>, psi: f64, level_factor_mode: bool) -> DVector<f64> {
    correlation_strength(rho, level_factor_mode) * psi
}

/// Values below this are treated as an exactly zero penalty scale.
const PSI_ZERO: f64 = 1e-300;

/// A diagonal precision entry: finite, or an exactly excluded coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Precision {
    Finite(f64),
    Excluded,
}

/// Diagonal prior precision over the lambda vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagPrecision {
    pub entries: Vec<Precision>,
}

impl DiagPrecision {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_excluded(&self, i: usize) -> bool {
        matches!(self.entries[i], Precision::Excluded)
    }

    /// Indices of the coefficients that are not excluded.
    pub fn active(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| !self.is_excluded(i)).collect()
    }

    pub fn value(&self, i: usize) -> f64 {
        match self.entries[i] {
            Precision::Finite(v) => v,
            Precision::Excluded => f64::INFINITY,
        }
    }

    /// `lambda' D lambda` over the active coefficients.
    pub fn quad_form(&self, lambda: &DVector<f64>) -> f64 {
        self.entries
            .iter()
            .zip(lambda.iter())
            .map(|(e, l)| match e {
                Precision::Finite(d) => d * l * l,
                Precision::Excluded => 0.0,
            })
            .sum()
    }
}

/// Everything needed to evaluate the prior of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorState {
    pub psi_vec: DVector<f64>,
    pub kappa: Vec<f64>,
    pub r: f64,
    pub intercept_precision: f64,
    pub include_intercept: bool,
}

impl PriorState {
    pub fn new(psi_vec: DVector<f64>, kappa: &[f64], cfg: &PriorConfig) -> Result<PriorState> {
        if kappa.len() != psi_vec.len() {
            return Err(Error::Dimension(format!(
                "{} kappa tilts for {} factors",
                kappa.len(),
                psi_vec.len()
            )));
        }
        if psi_vec.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidArgument("psi_j must be nonnegative".into()));
        }
        Ok(PriorState {
            psi_vec,
            kappa: kappa.to_vec(),
            r: cfg.r,
            intercept_precision: cfg.intercept_precision,
            include_intercept: cfg.include_intercept,
        })
    }

    pub fn n_factors(&self) -> usize {
        self.psi_vec.len()
    }

    /// Whether factor `j` is deterministically excluded (`psi_j = 0`).
    pub fn is_excluded(&self, j: usize) -> bool {
        self.psi_vec[j] <= PSI_ZERO
    }

    /// Slab variance of factor `j` per unit of `sigma^2`.
    pub fn slab_scale(&self, j: usize) -> f64 {
        (1.0 + self.kappa[j]) * self.psi_vec[j]
    }

    /// Offset of the first factor inside the lambda vector.
    pub fn offset(&self) -> usize {
        usize::from(self.include_intercept)
    }
}

/// Diagonal precision `D(gamma)`.
pub fn build_d(gamma: &[bool], state: &PriorState) -> Result<DiagPrecision> {
    if gamma.len() != state.n_factors() {
        return Err(Error::Dimension(format!(
            "gamma has {} entries for {} factors",
            gamma.len(),
            state.n_factors()
        )));
    }
    let mut entries = Vec::with_capacity(gamma.len() + state.offset());
    if state.include_intercept {
        entries.push(Precision::Finite(state.intercept_precision));
    }
    for (j, &g) in gamma.iter().enumerate() {
        if state.is_excluded(j) {
            entries.push(Precision::Excluded);
        } else {
            let r = if g { 1.0 } else { state.r };
            entries.push(Precision::Finite(1.0 / (r * state.slab_scale(j))));
        }
    }
    Ok(DiagPrecision { entries })
}

/// Ex post maximum Sharpe ratio `sqrt(mu' Sigma^{-1} mu)` of the test assets.
pub fn ex_post_max_sr(mu_r: &DVector<f64>, sigma_r: &DMatrix<f64>) -> Result<f64> {
    let chol = linalg::cholesky(sigma_r, "test-asset covariance")?;
    Ok(linalg::inv_quad_form(&chol, mu_r).sqrt())
}

/// Cross-sectional scale from an unpenalized GLS fit at the given moments:
/// `alpha' Sigma^{-1} alpha / N` with only the intercept precision applied.
pub fn sigma2_plugin(inputs: &CrossSectionInputs, intercept_precision: f64) -> Result<f64> {
    let chol = linalg::cholesky(&inputs.sigma_r, "test-asset covariance")?;
    let sinv_c = chol.solve(&inputs.c);
    let mut a = inputs.c.tr_mul(&sinv_c);
    if inputs.include_intercept {
        a[(0, 0)] += intercept_precision;
    }
    let b = sinv_c.tr_mul(&inputs.mu_r);
    let lambda = linalg::spd_solve(&a, &b, "unpenalized cross-sectional system")
        .map_err(|e| Error::Calibration(format!("sigma^2 plug-in: {e}")))?;
    let alpha = &inputs.mu_r - &inputs.c * lambda;
    let s2 = linalg::inv_quad_form(&chol, &alpha) / inputs.n_assets() as f64;
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(Error::Calibration(format!(
            "sigma^2 plug-in is {s2}; the factors price the test assets exactly"
        )));
    }
    Ok(s2)
}

/// Global `psi` such that the prior expected squared Sharpe ratio of the
/// (unit-variance) factors equals `(target_fraction * max_sr)^2` as `r -> 0`.
pub fn calibrate_psi(
    target_fraction: f64,
    max_sr: f64,
    rho: &DMatrix<f64>,
    sigma2: f64,
    kappa: &[f64],
    cfg: &PriorConfig,
) -> Result<f64> {
    if !(target_fraction > 0.0) || !(max_sr > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::Calibration(format!(
            "need positive target fraction, max Sharpe ratio and sigma^2 (got {target_fraction}, {max_sr}, {sigma2})"
        )));
    }
    let strength = correlation_strength(rho, cfg.level_factor_mode);
    let budget: f64 = strength.iter().zip(kappa).map(|(s, k)| (1.0 + k) * s).sum();
    if !(budget > 0.0) {
        return Err(Error::Calibration(
            "all factors have zero correlation dispersion; no prior Sharpe ratio budget".into(),
        ));
    }
    let target_sq = (target_fraction * max_sr).powi(2);
    Ok(target_sq / (cfg.prior_inclusion() * sigma2 * budget))
}

/// Beta hyperparameters whose mean is `target_mean / k` and whose standard
/// deviation is `halfwidth / (2k)`.
pub fn sparsity_hyperparams(k: usize, target_mean: f64, halfwidth: f64) -> Result<(f64, f64)> {
    let kf = k as f64;
    if !(target_mean > 0.0 && target_mean < kf) {
        return Err(Error::Calibration(format!(
            "target mean {target_mean} must lie in (0, {k})"
        )));
    }
    if !(halfwidth > 0.0) {
        return Err(Error::Calibration(format!(
            "halfwidth must be positive, got {halfwidth}"
        )));
    }
    let m = target_mean / kf;
    let v = (halfwidth / (2.0 * kf)).powi(2);
    if v >= m * (1.0 - m) {
        return Err(Error::Calibration(format!(
            "variance {v:.4e} exceeds the Beta maximum {:.4e} for mean {m:.4}",
            m * (1.0 - m)
        )));
    }
    let total = m * (1.0 - m) / v - 1.0;
    Ok((m * total, (1.0 - m) * total))
}
