//! Serializable summaries of an estimation run.

use serde::{Deserialize, Serialize};

use crate::bma::{averaging_identity_gaps, sdf_sharpe_decomposition, top_factors, BmaSdf, Dimensionality};
use crate::error::Result;
use crate::gibbs::PosteriorDraws;
use crate::panel::{AssetClass, ReturnPanel};
use crate::pricing::{sdf_report, PricingReport};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub name: String,
    pub class: AssetClass,
    pub prob: f64,
    pub prob_se: f64,
    pub mpr: f64,
    pub mpr_se: f64,
    pub conditional_mpr: Option<f64>,
    /// `E[lambda] - E[lambda | included] * P(included)` and its standard error.
    pub identity_gap: f64,
    pub identity_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl Interval {
    pub fn of(x: &[f64]) -> Interval {
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        Interval {
            mean: stats::mean(&s),
            q05: stats::quantile_sorted(&s, 0.05),
            q50: stats::quantile_sorted(&s, 0.5),
            q95: stats::quantile_sorted(&s, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSharpe {
    pub class: AssetClass,
    pub n_factors: usize,
    /// Posterior mean Sharpe ratio of the class's part of the SDF.
    pub sr: f64,
    /// Posterior mean share of the squared SDF Sharpe ratio.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrDecomposition {
    pub by_class: Vec<ClassSharpe>,
    pub draws_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub seed: u64,
    pub n_chains: usize,
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub retained: usize,
    pub rhat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfPoint {
    pub date: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub factors: Vec<FactorRow>,
    /// Posterior of the SDF Sharpe ratio (monthly).
    pub sr: Interval,
    pub dimensionality: Dimensionality,
    /// Absent when no factor covariances were stored.
    pub sr_decomposition: Option<SrDecomposition>,
    pub top_factors: Vec<String>,
    pub pricing: Option<PricingReport>,
    pub psi: f64,
    pub max_sr: f64,
    pub chains: ChainSummary,
    pub sdf: Option<Vec<SdfPoint>>,
}

impl EstimateReport {
    pub fn build(
        draws: &PosteriorDraws,
        panel: &ReturnPanel,
        top_n: usize,
        with_series: bool,
    ) -> Result<EstimateReport> {
        let bma = BmaSdf::from_draws(draws, panel)?;
        let gaps = averaging_identity_gaps(draws)?;
        let factors = (0..draws.n_factors())
            .map(|j| FactorRow {
                name: bma.factor_names[j].clone(),
                class: panel.factor_meta()[j].asset_class,
                prob: bma.factor_probs[j].mean,
                prob_se: bma.factor_probs[j].se,
                mpr: bma.mprs[j].mean,
                mpr_se: bma.mprs[j].se,
                conditional_mpr: bma.conditional_mprs[j],
                identity_gap: gaps[j].0,
                identity_se: gaps[j].1,
            })
            .collect();
        let top = top_factors(&bma.prob_means(), &bma.mpr_means(), top_n)
            .into_iter()
            .map(|j| bma.factor_names[j].clone())
            .collect();
        let classes: Vec<AssetClass> = AssetClass::ALL
            .into_iter()
            .filter(|c| panel.factor_meta().iter().any(|m| m.asset_class == *c))
            .collect();
        let subsets: Vec<Vec<usize>> = classes
            .iter()
            .map(|c| {
                (0..panel.n_factors())
                    .filter(|&j| panel.factor_meta()[j].asset_class == *c)
                    .collect()
            })
            .collect();
        let sr_decomposition = sdf_sharpe_decomposition(draws, &subsets).ok().map(|d| SrDecomposition {
            by_class: classes
                .iter()
                .zip(&d.subsets)
                .map(|(c, s)| ClassSharpe {
                    class: *c,
                    n_factors: s.factors.len(),
                    sr: s.sr,
                    share: s.share,
                })
                .collect(),
            draws_used: d.n_draws_used,
        });
        let pricing = sdf_report(&bma.sdf_series, panel.returns(), "bma-sdf").ok();
        let first = draws.chains.first();
        Ok(EstimateReport {
            factors,
            sr: Interval::of(&bma.sr_posterior),
            dimensionality: bma.dimensionality.clone(),
            sr_decomposition,
            top_factors: top,
            pricing,
            psi: draws.psi,
            max_sr: draws.max_sr,
            chains: ChainSummary {
                seed: first.map_or(0, |c| c.seed),
                n_chains: draws.chains.len(),
                n_draws: draws.n_draws,
                burn_in: draws.burn_in,
                thin: draws.thin,
                retained: draws.len(),
                rhat: draws.rhat(),
            },
            sdf: with_series.then(|| {
                panel
                    .dates()
                    .iter()
                    .zip(&bma.sdf_series)
                    .map(|(d, v)| SdfPoint {
                        date: d.clone(),
                        value: *v,
                    })
                    .collect()
            }),
        })
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::run_chain;
    use crate::panel::{standardize, synthetic_dates, FactorMeta};
    use crate::prior::PriorConfig;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn report_round_trips_through_json() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = 120;
        let f = DMatrix::from_fn(t, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = DMatrix::from_fn(t, 5, |s, i| {
            0.1 * i as f64 + f[(s, 0)] * (i as f64 * 0.3 - 0.5) + rng.sample::<f64, _>(StandardNormal)
        });
        let panel = ReturnPanel::new(
            synthetic_dates(1990, t),
            (0..5).map(|i| format!("r{i}")).collect(),
            r,
            f,
            vec![
                FactorMeta::new("f1", false, AssetClass::Stock),
                FactorMeta::new("f2", false, AssetClass::Bond),
            ],
        )
        .unwrap();
        let panel = standardize(&panel).unwrap();
        let draws = run_chain(&panel, &PriorConfig::default(), 400, 100, 1, 3).unwrap();
        let rep = EstimateReport::build(&draws, &panel, 1, true).unwrap();
        assert_eq!(rep.factors.len(), 2);
        assert_eq!(rep.chains.retained, 300);
        assert_eq!(rep.sdf.as_ref().unwrap().len(), t);
        let back: EstimateReport = serde_json::from_str(&to_json(&rep).unwrap()).unwrap();
        assert_eq!(back.top_factors, rep.top_factors);
        assert!(rep.sr.q05 <= rep.sr.q50 && rep.sr.q50 <= rep.sr.q95);
    }
}
