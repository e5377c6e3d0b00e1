//! Tradable portfolios from prices of risk and an expanding-window backtest.

use serde::{Deserialize, Serialize};

use crate::bma::posterior_mprs;
use crate::error::{Error, Result};
use crate::gibbs::{run_chains, ChainOptions};
use crate::panel::{standardize, ReturnPanel};
use crate::prior::PriorConfig;
use crate::stats;

const MONTHS: f64 = 12.0;

/// Scale prices of risk to weights summing to one.
pub fn portfolio_weights(mprs: &[f64]) -> Result<Vec<f64>> {
    if mprs.is_empty() {
        return Err(Error::InvalidArgument("no prices of risk".into()));
    }
    if let Some(v) = mprs.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite price of risk {v}")));
    }
    let sum: f64 = mprs.iter().sum();
    let l1: f64 = mprs.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 || sum.abs() <= 4.0 * f64::EPSILON * l1 {
        return Err(Error::Normalization(format!(
            "prices of risk sum to {sum}; the portfolio direction is undefined"
        )));
    }
    Ok(mprs.iter().map(|v| v / sum).collect())
}

/// Rescale `strategy` to the volatility of `benchmark`.
pub fn vol_scale(strategy: &[f64], benchmark: &[f64]) -> Result<Vec<f64>> {
    let factor = vol_ratio(strategy, benchmark)?;
    Ok(strategy.iter().map(|r| r * factor).collect())
}

fn vol_ratio(strategy: &[f64], benchmark: &[f64]) -> Result<f64> {
    if strategy.len() < 2 || benchmark.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two returns to measure volatility".into(),
        ));
    }
    let s = stats::std_dev(strategy);
    let b = stats::std_dev(benchmark);
    if !(s > 0.0) {
        return Err(Error::Undefined("strategy returns have zero variance".into()));
    }
    if !(b > 0.0) {
        return Err(Error::Undefined("benchmark returns have zero variance".into()));
    }
    Ok(b / s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfStats {
    pub n_months: usize,
    /// Mean monthly return times 12, in the units of the input returns.
    pub annual_mean: f64,
    pub sharpe: f64,
    pub information_ratio: Option<f64>,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Annualized statistics of monthly returns; the information ratio is
/// computed on returns in excess of `benchmark` when given.
pub fn perf_stats(returns: &[f64], benchmark: Option<&[f64]>) -> Result<PerfStats> {
    if returns.len() < 2 {
        return Err(Error::InsufficientData("need at least two returns".into()));
    }
    let sd = stats::std_dev(returns);
    if !(sd > 0.0) {
        return Err(Error::Undefined(
            "returns have zero variance; Sharpe ratio is undefined".into(),
        ));
    }
    let m = stats::mean(returns);
    let information_ratio = match benchmark {
        None => None,
        Some(b) => {
            if b.len() != returns.len() {
                return Err(Error::Dimension(format!(
                    "{} returns and {} benchmark returns",
                    returns.len(),
                    b.len()
                )));
            }
            let excess: Vec<f64> = returns.iter().zip(b).map(|(r, b)| r - b).collect();
            let se = stats::std_dev(&excess);
            (se > 0.0).then(|| stats::mean(&excess) / se * MONTHS.sqrt())
        }
    };
    Ok(PerfStats {
        n_months: returns.len(),
        annual_mean: m * MONTHS,
        sharpe: m / sd * MONTHS.sqrt(),
        information_ratio,
        skewness: stats::skewness(returns),
        kurtosis: stats::kurtosis(returns),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VolScaling {
    Off,
    /// One ex post factor on the whole out-of-sample series.
    FullSeries,
    /// Each holding period scaled with volatilities from its training window.
    PerWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub initial_window: usize,
    pub rebalance_every: usize,
    pub vol_scaling: VolScaling,
    /// Factor whose volatility the strategy is scaled to.
    pub vol_reference: Option<String>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            initial_window: 222,
            rebalance_every: 12,
            vol_scaling: VolScaling::Off,
            vol_reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowWeights {
    /// Rows `0..train_end` were used for estimation.
    pub train_end: usize,
    pub hold_end: usize,
    pub weights: Vec<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backtest {
    pub factor_names: Vec<String>,
    pub dates: Vec<String>,
    pub returns: Vec<f64>,
    pub benchmark_returns: Vec<f64>,
    pub windows: Vec<WindowWeights>,
    pub stats: PerfStats,
    pub benchmark_stats: PerfStats,
}

fn tradable_indices(panel: &ReturnPanel) -> Vec<usize> {
    (0..panel.n_factors())
        .filter(|&j| panel.factor_meta()[j].tradable)
        .collect()
}

fn portfolio_return(panel: &ReturnPanel, cols: &[usize], weights: &[f64], row: usize) -> f64 {
    cols.iter()
        .zip(weights)
        .map(|(&c, w)| w * panel.factors()[(row, c)])
        .sum()
}

/// Expanding-window backtest over the tradable factors. `estimator` maps a
/// training panel and the window index to prices of risk (raw units) of the
/// tradable factors in column order.
pub fn expanding_backtest<F>(panel: &ReturnPanel, cfg: &BacktestConfig, mut estimator: F) -> Result<Backtest>
where
    F: FnMut(&ReturnPanel, usize) -> Result<Vec<f64>>,
{
    let t = panel.t();
    if cfg.initial_window == 0 || cfg.rebalance_every == 0 {
        return Err(Error::InvalidArgument("windows must be positive".into()));
    }
    if cfg.initial_window + cfg.rebalance_every > t {
        return Err(Error::InvalidArgument(format!(
            "initial window {} plus rebalance period {} exceeds T = {t}",
            cfg.initial_window, cfg.rebalance_every
        )));
    }
    let cols = tradable_indices(panel);
    if cols.is_empty() {
        return Err(Error::InvalidArgument("panel has no tradable factors".into()));
    }
    let reference = match (&cfg.vol_scaling, &cfg.vol_reference) {
        (VolScaling::Off, _) => None,
        (_, Some(name)) => Some(
            panel
                .factor_index(name)
                .ok_or_else(|| Error::Schema(format!("no factor `{name}` to scale volatility to")))?,
        ),
        (_, None) => {
            return Err(Error::InvalidArgument(
                "volatility scaling needs a reference factor".into(),
            ))
        }
    };
    let ew = vec![1.0 / cols.len() as f64; cols.len()];

    let mut windows = Vec::new();
    let mut returns = Vec::new();
    let mut benchmark = Vec::new();
    let mut train_end = cfg.initial_window;
    while train_end < t {
        let w_idx = windows.len();
        let hold_end = (train_end + cfg.rebalance_every).min(t);
        let train = panel.slice_rows(0..train_end).map_err(|e| e.at_window(w_idx))?;
        let mprs = estimator(&train, w_idx).map_err(|e| e.at_window(w_idx))?;
        if mprs.len() != cols.len() {
            return Err(Error::Dimension(format!(
                "estimator returned {} prices of risk for {} tradable factors",
                mprs.len(),
                cols.len()
            ))
            .at_window(w_idx));
        }
        let weights = portfolio_weights(&mprs).map_err(|e| e.at_window(w_idx))?;
        let scale = match (cfg.vol_scaling, reference) {
            (VolScaling::PerWindow, Some(r)) => {
                let ins: Vec<f64> = (0..train_end)
                    .map(|s| portfolio_return(panel, &cols, &weights, s))
                    .collect();
                vol_ratio(&ins, &stats::column(train.factors(), r)).map_err(|e| e.at_window(w_idx))?
            }
            _ => 1.0,
        };
        for s in train_end..hold_end {
            returns.push(scale * portfolio_return(panel, &cols, &weights, s));
            benchmark.push(portfolio_return(panel, &cols, &ew, s));
        }
        windows.push(WindowWeights {
            train_end,
            hold_end,
            weights,
            scale,
        });
        train_end = hold_end;
    }
    if let (VolScaling::FullSeries, Some(r)) = (cfg.vol_scaling, reference) {
        let oos_ref: Vec<f64> = (cfg.initial_window..t).map(|s| panel.factors()[(s, r)]).collect();
        let k = vol_ratio(&returns, &oos_ref)?;
        returns.iter_mut().for_each(|v| *v *= k);
        windows.iter_mut().for_each(|w| w.scale = k);
    }
    let stats = perf_stats(&returns, Some(&benchmark))?;
    let benchmark_stats = perf_stats(&benchmark, Some(&benchmark))?;
    Ok(Backtest {
        factor_names: cols.iter().map(|&j| panel.factor_meta()[j].name.clone()).collect(),
        dates: panel.dates()[cfg.initial_window..].to_vec(),
        returns,
        benchmark_returns: benchmark,
        windows,
        stats,
        benchmark_stats,
    })
}

/// Estimator for [`expanding_backtest`]: posterior mean prices of risk of the
/// tradable factors on the standardized training window, converted back to
/// raw factor units.
pub fn bma_estimator(
    prior: PriorConfig,
    opts: ChainOptions,
    n_chains: usize,
) -> impl FnMut(&ReturnPanel, usize) -> Result<Vec<f64>> {
    move |train, window| {
        let std = standardize(train)?;
        let opts = ChainOptions {
            seed: opts.seed.wrapping_add(window as u64),
            ..opts.clone()
        };
        let draws = run_chains(&std, &prior, &opts, n_chains)?;
        let mprs = posterior_mprs(&draws)?.mprs;
        let sd = &std.scaling().expect("standardized panel has scaling").factor_sd;
        Ok(tradable_indices(train)
            .into_iter()
            .map(|j| mprs[j].mean / sd[j])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{synthetic_dates, AssetClass, FactorMeta};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn tradable_panel(t: usize, seed: u64) -> ReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = DMatrix::from_fn(t, 3, |_, j| {
            0.5 + 0.2 * j as f64 + rng.sample::<f64, _>(StandardNormal) * 3.0
        });
        let mut r = DMatrix::from_fn(t, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        r.columns_mut(4, 2).copy_from(&f.columns(0, 2));
        let names = ["p0", "p1", "p2", "p3", "a", "b"].map(String::from).to_vec();
        ReturnPanel::new(
            synthetic_dates(1970, t),
            names,
            r,
            f,
            vec![
                FactorMeta::new("a", true, AssetClass::Stock),
                FactorMeta::new("b", true, AssetClass::Bond),
                FactorMeta::new("c", false, AssetClass::Nontradable),
            ],
        )
        .unwrap()
    }

    #[test]
    fn weight_examples() {
        assert_eq!(portfolio_weights(&[0.2, 0.3, 0.5]).unwrap(), vec![0.2, 0.3, 0.5]);
        assert_eq!(portfolio_weights(&[2.0, -1.0, 1.0]).unwrap(), vec![1.0, -0.5, 0.5]);
        assert!(matches!(portfolio_weights(&[1.0, -1.0]), Err(Error::Normalization(_))));
    }

    #[test]
    fn vol_scale_examples() {
        let b = [1.0, -1.0, 2.0, 0.5];
        assert_eq!(vol_scale(&b, &b).unwrap(), b.to_vec());
        let s: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        let h = vol_scale(&s, &b).unwrap();
        for (x, y) in h.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(vol_scale(&[1.0, 1.0, 1.0], &b).is_err());
    }

    #[test]
    fn annualization() {
        let r = [1.0, 2.0, -0.5, 0.7, 1.1];
        let p = perf_stats(&r, None).unwrap();
        assert_eq!(p.sharpe, stats::mean(&r) / stats::std_dev(&r) * 12f64.sqrt());
        assert_eq!(p.annual_mean, stats::mean(&r) * 12.0);
    }

    #[test]
    fn equal_weights_reproduce_benchmark() {
        let p = tradable_panel(120, 1);
        let cfg = BacktestConfig {
            initial_window: 60,
            rebalance_every: 12,
            ..BacktestConfig::default()
        };
        let bt = expanding_backtest(&p, &cfg, |_, _| Ok(vec![1.0, 1.0])).unwrap();
        assert_eq!(bt.returns, bt.benchmark_returns);
        assert_eq!(bt.stats.sharpe, bt.benchmark_stats.sharpe);
        assert_eq!(bt.windows.len(), 5);
        assert_eq!(bt.returns.len(), 60);
    }

    #[test]
    fn estimator_failure_reports_window() {
        let p = tradable_panel(100, 2);
        let cfg = BacktestConfig {
            initial_window: 50,
            rebalance_every: 10,
            ..BacktestConfig::default()
        };
        let err = expanding_backtest(&p, &cfg, |_, w| {
            if w == 2 {
                Err(Error::Undefined("boom".into()))
            } else {
                Ok(vec![1.0, 0.5])
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::AtWindow { window: 2, .. }));
    }

    #[test]
    fn window_lengths_must_fit() {
        let p = tradable_panel(50, 3);
        let cfg = BacktestConfig {
            initial_window: 45,
            rebalance_every: 12,
            ..BacktestConfig::default()
        };
        assert!(expanding_backtest(&p, &cfg, |_, _| Ok(vec![1.0, 1.0])).is_err());
    }
}
