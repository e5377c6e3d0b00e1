mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zoo_sdf::dynamics::{garch_variance, half_life, ljung_box};
use zoo_sdf::panel::{duration_adjust, load_panel, standardize, write_panel};
use zoo_sdf::pricing::cross_section_fit;
use zoo_sdf::prior::{build_d, compute_psi, sparsity_hyperparams, PriorConfig, PriorState, PsiSpec};
use zoo_sdf::trader::{perf_stats, portfolio_weights};
use zoo_sdf::ts_layer::{extract_cross_section, TsPosterior};
use zoo_sdf::{stats, DurationInputs};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n + 2, n).prop_map(move |a| a.transpose() * &a + DMatrix::identity(n, n) * 0.1)
}

fn prior_cfg(r: f64) -> PriorConfig {
    PriorConfig {
        psi: PsiSpec::Fixed(1.0),
        r,
        ..PriorConfig::default()
    }
}

fn zero_sum_kappa(raw: &[f64]) -> Vec<f64> {
    let m = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.iter().map(|k| (k - m) * 0.5).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slab_to_spike_variance_ratio_is_inverse_r(
        psi in prop::collection::vec(0.01..5.0f64, 4),
        raw in prop::collection::vec(-0.9..0.9f64, 4),
        r in 1e-4..0.5f64,
    ) {
        let kappa = zero_sum_kappa(&raw);
        let state = PriorState::new(DVector::from_vec(psi), &kappa, &prior_cfg(r)).unwrap();
        let slab = build_d(&[true; 4], &state).unwrap();
        let spike = build_d(&[false; 4], &state).unwrap();
        for j in 1..5 {
            let ratio = spike.value(j) / slab.value(j);
            prop_assert!((ratio * r - 1.0).abs() < 1e-12, "ratio {ratio} at r {r}");
        }
    }

    #[test]
    fn tilting_other_factors_leaves_untilted_precision_alone(
        psi in prop::collection::vec(0.01..5.0f64, 3),
        tilt in -0.9..0.9f64,
        gamma in prop::collection::vec(any::<bool>(), 3),
    ) {
        let cfg = prior_cfg(0.001);
        let flat = PriorState::new(DVector::from_vec(psi.clone()), &[0.0; 3], &cfg).unwrap();
        let tilted = PriorState::new(DVector::from_vec(psi), &[tilt, 0.0, -tilt], &cfg).unwrap();
        let a = build_d(&gamma, &flat).unwrap();
        let b = build_d(&gamma, &tilted).unwrap();
        prop_assert_eq!(a.entries[2], b.entries[2]);
        prop_assert_eq!(a.entries[0], b.entries[0]);
    }

    #[test]
    fn penalty_scales_are_nonnegative_and_linear_in_psi(rho in matrix(6, 3), psi in 0.01..10.0f64) {
        let rho = rho.map(|v| (v / 3.0).clamp(-1.0, 1.0));
        for level in [false, true] {
            let unit = compute_psi(&rho, 1.0, level);
            let scaled = compute_psi(&rho, psi, level);
            for j in 0..3 {
                prop_assert!(unit[j] >= 0.0);
                prop_assert!((scaled[j] - psi * unit[j]).abs() <= 1e-12 * (1.0 + scaled[j].abs()));
            }
        }
    }

    #[test]
    fn sparsity_hyperparams_hit_their_moments(k in 5usize..80, frac in 0.05..0.5f64, width in 0.1..1.0f64) {
        let target = frac * k as f64;
        let halfwidth = width * target.min(k as f64 - target);
        if let Ok((a, b)) = sparsity_hyperparams(k, target, halfwidth) {
            let mean = a / (a + b);
            let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
            prop_assert!((mean * k as f64 - target).abs() < 1e-9 * target);
            prop_assert!((sd * 2.0 * k as f64 - halfwidth).abs() < 1e-9 * halfwidth);
        }
    }

    #[test]
    fn gls_r2_is_invariant_to_unit_rescaling(
        sigma in spd(5),
        realized in prop::collection::vec(-1.0..1.0f64, 5),
        predicted in prop::collection::vec(-1.0..1.0f64, 5),
        scale in prop_oneof![0.01..100.0f64, -100.0..-0.01f64],
    ) {
        let realized = DVector::from_vec(realized);
        prop_assume!(realized.add_scalar(-realized.mean()).norm() > 1e-3);
        let predicted = DVector::from_vec(predicted);
        let base = cross_section_fit(&predicted, &realized, &sigma, "base").unwrap();
        let scaled = cross_section_fit(&(&predicted * scale), &(&realized * scale), &(&sigma * (scale * scale)), "scaled").unwrap();
        prop_assert!((base.r2_gls - scaled.r2_gls).abs() < 1e-10, "{} vs {}", base.r2_gls, scaled.r2_gls);
        prop_assert!((base.r2_ols - scaled.r2_ols).abs() < 1e-10);
        prop_assert!(base.r2_gls <= 1.0 && base.r2_ols <= 1.0);
    }

    #[test]
    fn perfect_prediction_prices_exactly(sigma in spd(4), realized in prop::collection::vec(-1.0..1.0f64, 4)) {
        let realized = DVector::from_vec(realized);
        prop_assume!(realized.add_scalar(-realized.mean()).norm() > 1e-3);
        let rep = cross_section_fit(&realized, &realized, &sigma, "exact").unwrap();
        prop_assert_eq!(rep.rmse, 0.0);
        prop_assert_eq!(rep.r2_ols, 1.0);
        prop_assert_eq!(rep.r2_gls, 1.0);
    }

    #[test]
    fn portfolio_weights_ignore_the_scale_of_prices(
        mprs in prop::collection::vec(-2.0..2.0f64, 1..8),
        c in prop_oneof![0.01..100.0f64, -100.0..-0.01f64],
    ) {
        let sum: f64 = mprs.iter().sum();
        prop_assume!(sum.abs() > 1e-3);
        let w = portfolio_weights(&mprs).unwrap();
        let scaled: Vec<f64> = mprs.iter().map(|v| c * v).collect();
        let ws = portfolio_weights(&scaled).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in w.iter().zip(&ws) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn sharpe_is_the_annualized_monthly_ratio(r in prop::collection::vec(-5.0..5.0f64, 3..60)) {
        prop_assume!(stats::std_dev(&r) > 1e-6);
        let p = perf_stats(&r, None).unwrap();
        let monthly = stats::mean(&r) / stats::std_dev(&r);
        prop_assert_eq!(p.sharpe, monthly * 12f64.sqrt());
    }

    #[test]
    fn garch_recursion_reproduces_its_variances(
        e in prop::collection::vec(-3.0..3.0f64, 2..200),
        omega in 0.001..1.0f64,
        alpha in 0.0..0.5f64,
        beta in 0.0..0.49f64,
    ) {
        let v = garch_variance(&e, omega, alpha, beta);
        let mut s2 = omega / (1.0 - alpha - beta);
        prop_assert!((v[0] - s2).abs() <= 1e-12 * s2);
        for t in 1..e.len() {
            s2 = omega + alpha * e[t - 1].powi(2) + beta * s2;
            prop_assert!(v[t] > 0.0);
            prop_assert!((v[t] - s2).abs() <= 1e-12 * s2);
        }
    }

    #[test]
    fn half_life_increases_with_persistence(p in 0.01..0.98f64, step in 1e-4..0.01f64, split in 0.0..1.0f64) {
        let lo = half_life(split * p, (1.0 - split) * p).unwrap();
        let hi = half_life(split * (p + step), (1.0 - split) * (p + step)).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn ljung_box_statistic_and_p_value_are_well_formed(x in prop::collection::vec(-1.0..1.0f64, 40..120), lags in 1usize..9) {
        prop_assume!(stats::std_dev(&x) > 1e-3);
        let lb = ljung_box(&x, lags).unwrap();
        prop_assert!(lb.statistic >= 0.0);
        prop_assert!((0.0..=1.0).contains(&lb.p_value));
    }

    #[test]
    fn duration_adjustment_ignores_the_risk_free_rate(
        bonds in matrix(12, 3),
        treasuries in matrix(12, 3),
        rf1 in prop::collection::vec(-1.0..1.0f64, 12),
        rf2 in prop::collection::vec(-1.0..1.0f64, 12),
    ) {
        let a = duration_adjust(&DurationInputs::new(bonds.clone(), treasuries.clone(), rf1.clone()).unwrap());
        let b = duration_adjust(&DurationInputs::new(bonds.clone(), treasuries.clone(), rf2).unwrap());
        prop_assert_eq!(&a, &b);
        let rf = DMatrix::from_fn(12, 3, |t, _| rf1[t]);
        let via_excess = (&bonds - &rf) - (&treasuries - &rf);
        prop_assert!((a - via_excess).abs().max() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn standardize_round_trips(seed in any::<u64>(), t in 30usize..80) {
        let panel = common::factor_panel(t, 5, 3, 2, seed);
        let z = standardize(&panel).unwrap();
        for j in 0..5 {
            prop_assert!((stats::std_dev(&stats::column(z.returns(), j)) - 1.0).abs() < 1e-10);
        }
        let back = z.unstandardize();
        prop_assert!((back.returns() - panel.returns()).abs().max() < 1e-12);
        prop_assert!((back.factors() - panel.factors()).abs().max() < 1e-12);
        let again = standardize(&back).unwrap();
        prop_assert!((again.returns() - z.returns()).abs().max() < 1e-12);
    }

    #[test]
    fn panel_csv_round_trip_is_a_fixed_point(seed in any::<u64>()) {
        let panel = common::tradable_panel(24, seed);
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        write_panel(&panel, &p("r.csv"), &p("f.csv"), &p("m.csv")).unwrap();
        let once = load_panel(&p("r.csv"), &p("f.csv"), &p("m.csv")).unwrap();
        write_panel(&once, &p("r2.csv"), &p("f2.csv"), &p("m2.csv")).unwrap();
        let twice = load_panel(&p("r2.csv"), &p("f2.csv"), &p("m2.csv")).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.returns(), panel.returns());
        prop_assert_eq!(once.factors(), panel.factors());
    }

    #[test]
    fn nonzero_kappa_sum_is_rejected(shift in 0.01..0.3f64) {
        let panel = common::tradable_panel(24, 1);
        prop_assert!(panel.with_kappa(&[0.2, -0.2, 0.0]).is_ok());
        prop_assert!(panel.with_kappa(&[0.2 + shift, -0.2, 0.0]).is_err());
    }

    #[test]
    fn every_time_series_draw_has_a_positive_definite_asset_block(seed in any::<u64>()) {
        let panel = common::factor_panel(60, 6, 3, 2, seed);
        let post = TsPosterior::new(&panel).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let draw = post.draw(&mut rng);
            let cs = extract_cross_section(&draw, &panel, true).unwrap();
            prop_assert!(cs.sigma_r.clone().cholesky().is_some());
            prop_assert!(cs.rho.iter().all(|r| (-1.0..=1.0).contains(r)));
            prop_assert!(cs.c.column(0).iter().all(|&v| v == 1.0));
        }
    }
}
