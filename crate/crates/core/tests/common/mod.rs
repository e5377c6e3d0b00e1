#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use zoo_sdf::panel::synthetic_dates;
use zoo_sdf::{AssetClass, FactorMeta, ReturnPanel};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Linear factor panel: `n` assets loading on `k` unit-variance factors with
/// premia `0.1 * loading` on the first `priced` factors, plus idiosyncratic
/// noise. Factor `k - 1` is useless (no loadings) when `k > priced`.
pub fn factor_panel(t: usize, n: usize, k: usize, priced: usize, seed: u64) -> ReturnPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = DMatrix::from_fn(t, k, |_, _| normal(&mut rng));
    let beta = DMatrix::from_fn(n, k, |_, j| {
        if j < priced {
            0.2 + 0.8 * normal(&mut rng)
        } else if j + 1 < k {
            0.6 * normal(&mut rng)
        } else {
            0.0
        }
    });
    let premia: Vec<f64> = (0..n).map(|i| (0..priced).map(|j| 0.15 * beta[(i, j)]).sum()).collect();
    let r = DMatrix::from_fn(t, n, |s, i| {
        premia[i] + (0..k).map(|j| beta[(i, j)] * f[(s, j)]).sum::<f64>() + 0.8 * normal(&mut rng)
    });
    let classes = [AssetClass::Stock, AssetClass::Bond, AssetClass::Nontradable];
    ReturnPanel::new(
        synthetic_dates(1970, t),
        (0..n).map(|i| format!("p{i}")).collect(),
        r,
        f,
        (0..k)
            .map(|j| FactorMeta::new(format!("f{j}"), false, classes[j % 3]))
            .collect(),
    )
    .unwrap()
}

/// Panel with two tradable factors that are also test assets and one
/// nontradable factor.
pub fn tradable_panel(t: usize, seed: u64) -> ReturnPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = DMatrix::from_fn(t, 3, |_, j| 0.5 + 0.2 * j as f64 + normal(&mut rng) * 3.0);
    let mut r = DMatrix::from_fn(t, 6, |s, i| 0.3 * f[(s, i % 3)] + normal(&mut rng));
    r.columns_mut(4, 2).copy_from(&f.columns(0, 2));
    ReturnPanel::new(
        synthetic_dates(1970, t),
        ["p0", "p1", "p2", "p3", "a", "b"].map(String::from).to_vec(),
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

pub fn iid_normal(t: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..t).map(|_| normal(&mut rng)).collect()
}

/// GARCH(1,1) path with Gaussian shocks, after a 500-step warm-up.
pub fn garch_path(t: usize, omega: f64, alpha: f64, beta: f64, seed: u64) -> Vec<f64> {
    let z = iid_normal(t + 500, seed);
    let mut s2 = omega / (1.0 - alpha - beta);
    let mut out: Vec<f64> = Vec::with_capacity(t + 500);
    for (i, zi) in z.iter().enumerate() {
        if i > 0 {
            let e = out[i - 1];
            s2 = omega + alpha * e * e + beta * s2;
        }
        out.push(s2.sqrt() * zi);
    }
    out.split_off(500)
}
