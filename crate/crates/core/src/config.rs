//! TOML run configuration. Values present in the file override defaults;
//! callers apply command-line overrides afterwards.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::ChainOptions;
use crate::panel::{AssetClass, ReturnPanel};
use crate::prior::{PriorConfig, PsiSpec, SigmaPrior};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub r: Option<f64>,
    pub a_omega: Option<f64>,
    pub b_omega: Option<f64>,
    pub sr_fraction: Option<f64>,
    /// Fixed penalty scale; conflicts with `sr_fraction`.
    pub psi: Option<f64>,
    /// Intercept prior precision.
    pub c: Option<f64>,
    pub level_factor_mode: Option<bool>,
    pub include_intercept: Option<bool>,
    pub psi_from_sample: Option<bool>,
    pub sigma2_shape: Option<f64>,
    pub sigma2_scale: Option<f64>,
    /// Tilt per factor class (`bond`, `stock`, `nontradable`).
    pub kappa: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub n_draws: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub chains: Option<usize>,
    pub cov_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub chain: ChainSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        RunConfig::parse(&text)
    }

    pub fn prior_config(&self) -> Result<PriorConfig> {
        let p = &self.prior;
        let mut cfg = PriorConfig::default();
        match (p.sr_fraction, p.psi) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set at most one of prior.sr_fraction and prior.psi".into(),
                ));
            }
            (Some(f), None) => cfg.psi = PsiSpec::SrFraction(f),
            (None, Some(v)) => cfg.psi = PsiSpec::Fixed(v),
            (None, None) => {}
        }
        if let Some(v) = p.r {
            cfg.r = v;
        }
        if let Some(v) = p.a_omega {
            cfg.a_omega = v;
        }
        if let Some(v) = p.b_omega {
            cfg.b_omega = v;
        }
        if let Some(v) = p.c {
            cfg.intercept_precision = v;
        }
        if let Some(v) = p.level_factor_mode {
            cfg.level_factor_mode = v;
        }
        if let Some(v) = p.include_intercept {
            cfg.include_intercept = v;
        }
        if let Some(v) = p.psi_from_sample {
            cfg.psi_from_sample = v;
        }
        cfg.sigma_prior = match (p.sigma2_shape, p.sigma2_scale) {
            (None, None) => SigmaPrior::Jeffreys,
            (Some(shape), Some(scale)) => SigmaPrior::InverseGamma { shape, scale },
            _ => {
                return Err(Error::Config(
                    "prior.sigma2_shape and prior.sigma2_scale must be given together".into(),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn chain_options(&self) -> ChainOptions {
        let c = &self.chain;
        let d = ChainOptions::default();
        ChainOptions {
            n_draws: c.n_draws.unwrap_or(d.n_draws),
            burn_in: c.burn_in.unwrap_or(d.burn_in),
            thin: c.thin.unwrap_or(d.thin),
            seed: self.seed.unwrap_or(d.seed),
            cov_stride: c.cov_stride.unwrap_or(d.cov_stride),
            ..d
        }
    }

    /// Number of chains, 4 when unset.
    pub fn chains(&self) -> usize {
        self.chain.chains.unwrap_or(4)
    }
}

/// Set every factor's tilt from its class. Classes absent from the map keep
/// a zero tilt; the resulting tilts must sum to zero.
pub fn apply_class_kappa(panel: &ReturnPanel, by_class: &BTreeMap<String, f64>) -> Result<ReturnPanel> {
    let mut parsed = BTreeMap::new();
    for (k, v) in by_class {
        let class: AssetClass = k
            .parse()
            .map_err(|_| Error::Config(format!("unknown factor class `{k}` in prior.kappa")))?;
        parsed.insert(class, *v);
    }
    let kappa: Vec<f64> = panel
        .factor_meta()
        .iter()
        .map(|m| parsed.get(&m.asset_class).copied().unwrap_or(0.0))
        .collect();
    panel.with_kappa(&kappa).map_err(|e| Error::Config(e.to_string()))
}

/// Tilt `k` on every factor of class `tilted` and an offsetting common tilt
/// on all other factors, so that the tilts sum to zero.
pub fn two_class_kappa(panel: &ReturnPanel, tilted: AssetClass, k: f64) -> Result<ReturnPanel> {
    if !(k.abs() < 1.0) {
        return Err(Error::Config(format!("two-class tilt {k} outside (-1, 1)")));
    }
    let classes: Vec<AssetClass> = panel.factor_meta().iter().map(|m| m.asset_class).collect();
    let n_in = classes.iter().filter(|c| **c == tilted).count();
    let n_out = classes.len() - n_in;
    if n_in == 0 || n_out == 0 {
        return Err(Error::Config("two-class tilt needs factors on both sides".into()));
    }
    let up = k;
    let down = -k * n_in as f64 / n_out as f64;
    let kappa: Vec<f64> = classes.iter().map(|c| if *c == tilted { up } else { down }).collect();
    panel.with_kappa(&kappa).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{synthetic_dates, FactorMeta};
    use nalgebra::DMatrix;

    fn panel() -> ReturnPanel {
        let t = 12;
        ReturnPanel::new(
            synthetic_dates(2000, t),
            vec!["a".into(), "b".into()],
            DMatrix::from_fn(t, 2, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0),
            DMatrix::from_fn(t, 3, |r, c| ((r * 3 + c * 5 + r * c) % 7) as f64 - 3.0),
            vec![
                FactorMeta::new("b1", false, AssetClass::Bond),
                FactorMeta::new("s1", false, AssetClass::Stock),
                FactorMeta::new("s2", false, AssetClass::Stock),
            ],
        )
        .unwrap()
    }

    #[test]
    fn file_overrides_defaults() {
        let cfg = RunConfig::parse(
            "seed = 9\n[prior]\nr = 0.01\nsr_fraction = 0.4\nc = 0.5\n[chain]\nn_draws = 100\nburn_in = 10\n",
        )
        .unwrap();
        let p = cfg.prior_config().unwrap();
        assert_eq!(p.r, 0.01);
        assert_eq!(p.psi, PsiSpec::SrFraction(0.4));
        assert_eq!(p.intercept_precision, 0.5);
        assert_eq!(p.a_omega, 1.0);
        let o = cfg.chain_options();
        assert_eq!((o.n_draws, o.burn_in, o.seed, o.thin), (100, 10, 9, 1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("[prior]\nrr = 1\n"), Err(Error::Config(_))));
        assert!(RunConfig::parse("[prior]\nsr_fraction = 0.2\npsi = 3\n")
            .unwrap()
            .prior_config()
            .is_err());
    }

    #[test]
    fn class_kappa_must_balance() {
        let cfg = RunConfig::parse("[prior.kappa]\nbond = 0.5\nstock = -0.25\n").unwrap();
        let p = apply_class_kappa(&panel(), cfg.prior.kappa.as_ref().unwrap()).unwrap();
        assert_eq!(p.kappa(), vec![0.5, -0.25, -0.25]);
        let bad: BTreeMap<String, f64> = [("bond".to_string(), 0.5)].into();
        assert!(matches!(apply_class_kappa(&panel(), &bad), Err(Error::Config(_))));
    }

    #[test]
    fn two_class_tilt_sums_to_zero() {
        let p = two_class_kappa(&panel(), AssetClass::Bond, 0.4).unwrap();
        let k = p.kappa();
        assert!(k.iter().sum::<f64>().abs() < 1e-15);
        assert_eq!(k[0], 0.4);
    }
}
