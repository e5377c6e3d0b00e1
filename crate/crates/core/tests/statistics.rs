mod common;

use common::{factor_panel, garch_path, iid_normal, normal};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zoo_sdf::benchmarks::gls_gmm;
use zoo_sdf::bma::{factor_probabilities, posterior_mprs};
use zoo_sdf::dynamics::{fit_arma, fit_garch11, ljung_box, predictive_regression, Criterion};
use zoo_sdf::gibbs::run_chain;
use zoo_sdf::panel::{standardize, synthetic_dates};
use zoo_sdf::prior::PriorConfig;
use zoo_sdf::trader::{expanding_backtest, BacktestConfig};
use zoo_sdf::{stats, AssetClass, FactorMeta, ReturnPanel};

fn ar1(t: usize, phi: f64, seed: u64) -> Vec<f64> {
    let z = iid_normal(t + 200, seed);
    let mut x = vec![0.0; t + 200];
    for s in 1..x.len() {
        x[s] = phi * x[s - 1] + z[s];
    }
    x.split_off(200)
}

#[test]
fn ar1_coefficient_is_recovered() {
    let x = ar1(2000, 0.8, 11);
    let sel = fit_arma(&x, 1, 0, Criterion::Bic).unwrap();
    assert_eq!((sel.best.p, sel.best.q), (1, 0));
    assert!((sel.best.ar[0] - 0.8).abs() < 0.05, "{}", sel.best.ar[0]);
}

#[test]
fn ljung_box_rejects_autocorrelated_series() {
    let lb = ljung_box(&ar1(1000, 0.5, 3), 20).unwrap();
    assert!(lb.p_value < 1e-6, "{}", lb.p_value);
    assert!(ljung_box(&ar1(1000, 0.5, 3), 0).is_err());
}

#[test]
fn garch_bias_shrinks_with_sample_size() {
    let reps = 24;
    let truth = [0.01, 0.15, 0.81];
    let bias = |t: usize| -> [f64; 3] {
        let mut acc = [0.0; 3];
        for rep in 0..reps {
            let fit = fit_garch11(&garch_path(t, truth[0], truth[1], truth[2], 1000 + rep as u64)).unwrap();
            for (a, (est, tr)) in acc.iter_mut().zip([fit.omega, fit.alpha, fit.beta].iter().zip(truth)) {
                *a += (est - tr) / reps as f64;
            }
        }
        acc
    };
    let small = bias(1_000);
    let large = bias(10_000);
    let norm = |b: [f64; 3]| (b[1].powi(2) + b[2].powi(2)).sqrt();
    assert!(norm(large) <= 0.5 * norm(small), "T=1000 {small:?}, T=10000 {large:?}");
}

fn regressors(t: usize, phi: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let a = ar1(t, phi, seed);
    let b = ar1(t, phi, seed + 1);
    let var = a.iter().map(|v| 1.0 + 0.3 * v.abs()).collect();
    (b, var)
}

#[test]
fn exact_linear_targets_have_unit_r2() {
    let t = 300;
    let (m, v) = regressors(t, 0.5, 5);
    let y = DMatrix::from_fn(t, 1, |s, _| {
        if s == 0 {
            0.0
        } else {
            0.1 + 2.0 * v[s - 1] + 3.0 * m[s - 1] * v[s - 1]
        }
    });
    let res = predictive_regression(&y, &["y".into()], &m, &v, 1, 4).unwrap();
    assert!((res[0].r2 - 1.0).abs() < 1e-10, "{}", res[0].r2);
    assert!((res[0].coefficients[1] - 2.0).abs() < 1e-8);
}

#[test]
fn independent_targets_are_unpredictable() {
    let t = 400;
    let sims = 200;
    let mut r2 = Vec::new();
    let mut p = Vec::new();
    for sim in 0..sims {
        let (m, v) = regressors(t, 0.3, 50 + 3 * sim);
        let z = iid_normal(t, 9000 + sim);
        let y = DMatrix::from_column_slice(t, 1, &z);
        let res = &predictive_regression(&y, &["y".into()], &m, &v, 1, 4).unwrap()[0];
        r2.push(res.r2);
        p.push(res.ols_p_value);
    }
    let mean_r2 = stats::mean(&r2);
    assert!(mean_r2 < 3.0 * 2.0 / t as f64, "mean R2 {mean_r2}");
    let (_, ks_p) = stats::ks_uniform(&p);
    assert!(ks_p > 0.01, "KS p {ks_p}");
}

#[test]
fn overlapping_horizons_widen_hac_p_values() {
    let t = 500;
    let (mut hac, mut ols) = (Vec::new(), Vec::new());
    for sim in 0..40 {
        let (m, v) = regressors(t, 0.95, 700 + 3 * sim);
        let z = iid_normal(t, 800 + sim);
        let y = DMatrix::from_column_slice(t, 1, &z);
        let res = &predictive_regression(&y, &["y".into()], &m, &v, 12, 15).unwrap()[0];
        hac.push(res.p_value);
        ols.push(res.ols_p_value);
    }
    let (h, o) = (stats::median(&hac), stats::median(&ols));
    assert!(h > o, "HAC median p {h} vs OLS {o}");
}

#[test]
fn gls_recovers_prices_of_risk_under_exact_pricing() {
    let mut panel = factor_panel(300, 8, 2, 2, 21);
    let lambda = [0.3, -0.2];
    let cf = stats::cross_covariance(panel.returns(), panel.factors());
    let target = &cf * nalgebra::DVector::from_row_slice(&lambda);
    let means = stats::column_means(panel.returns());
    let mut r = panel.returns().clone();
    for i in 0..r.ncols() {
        r.column_mut(i).add_scalar_mut(target[i] - means[i]);
    }
    panel = ReturnPanel::new(
        panel.dates().to_vec(),
        panel.asset_names().to_vec(),
        r,
        panel.factors().clone(),
        panel.factor_meta().to_vec(),
    )
    .unwrap();
    let fit = gls_gmm(panel.factors(), &panel, false, "exact").unwrap();
    for (est, tr) in fit.lambda.iter().zip(lambda) {
        assert!((est - tr).abs() < 1e-8, "{est} vs {tr}");
    }
}

#[test]
fn useless_factor_is_unstable_for_gls_but_shrunk_by_bma() {
    let panel = standardize(&factor_panel(400, 10, 2, 1, 33)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut useless = Vec::new();
    for _ in 0..100 {
        let rows: Vec<usize> = (0..panel.t()).map(|_| rng.random_range(0..panel.t())).collect();
        let f = panel.factors().select_rows(&rows);
        let r = panel.returns().select_rows(&rows);
        let boot = ReturnPanel::new(
            synthetic_dates(1900, rows.len()),
            panel.asset_names().to_vec(),
            r,
            f.clone(),
            panel.factor_meta().to_vec(),
        )
        .unwrap();
        if let Ok(fit) = gls_gmm(&f, &boot, true, "boot") {
            useless.push(fit.lambda[2]);
        }
    }
    let cv = stats::std_dev(&useless) / stats::mean(&useless).abs();
    assert!(cv > 1.0, "coefficient of variation {cv}");
    let draws = run_chain(&panel, &PriorConfig::default(), 4_000, 1_000, 1, 8).unwrap();
    let mpr = posterior_mprs(&draws).unwrap().mprs[1].mean;
    assert!(mpr.abs() < 0.05, "posterior price of risk {mpr}");
}

#[test]
fn factor_order_does_not_change_the_posterior() {
    let panel = standardize(&factor_panel(300, 8, 3, 2, 44)).unwrap();
    let reversed = panel.select_factors(&[2, 1, 0]).unwrap();
    let cfg = PriorConfig::default();
    let a = run_chain(&panel, &cfg, 12_000, 2_000, 1, 1).unwrap();
    let b = run_chain(&reversed, &cfg, 12_000, 2_000, 1, 2).unwrap();
    let pa = factor_probabilities(&a).unwrap();
    let pb = factor_probabilities(&b).unwrap();
    let ma = posterior_mprs(&a).unwrap().mprs;
    let mb = posterior_mprs(&b).unwrap().mprs;
    for j in 0..3 {
        let k = 2 - j;
        let dp = (pa[j].mean - pb[k].mean).abs();
        let sp = 4.0 * (pa[j].se.powi(2) + pb[k].se.powi(2)).sqrt();
        assert!(dp < sp.max(0.02), "factor {j}: prob {} vs {}", pa[j].mean, pb[k].mean);
        let dm = (ma[j].mean - mb[k].mean).abs();
        let sm = 4.0 * (ma[j].se.powi(2) + mb[k].se.powi(2)).sqrt();
        assert!(dm < sm.max(0.01), "factor {j}: mpr {} vs {}", ma[j].mean, mb[k].mean);
    }
}

#[test]
fn backtest_sharpe_matches_population_value() {
    let t = 2_000;
    let k = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // Independent unit-variance factors with mean 1/6: the equal-weight
    // portfolio has an annualized Sharpe ratio of exactly 1.
    let f = DMatrix::from_fn(t, k, |_, _| 1.0 / 6.0 + normal(&mut rng));
    let r = DMatrix::from_fn(t, 4, |s, i| 0.5 * f[(s, i % k)] + normal(&mut rng));
    let panel = ReturnPanel::new(
        synthetic_dates(1800, t),
        (0..4).map(|i| format!("p{i}")).collect(),
        r,
        f,
        (0..k)
            .map(|j| FactorMeta::new(format!("f{j}"), true, AssetClass::Stock))
            .collect(),
    )
    .unwrap();
    let bt = expanding_backtest(&panel, &BacktestConfig::default(), |train, _| {
        Ok(stats::column_means(train.factors()).iter().copied().collect())
    })
    .unwrap();
    assert!((bt.stats.sharpe - 1.0).abs() < 0.2, "{}", bt.stats.sharpe);
}
