//! Descriptive statistics shared across modules.
//!
//! Sample variances and covariances use the `n - 1` denominator throughout.

use nalgebra::{DMatrix, DVector};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let mx = mean(x);
    let my = mean(y);
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1) as f64
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    covariance(x, y) / (std_dev(x) * std_dev(y))
}

/// Sample skewness `m3 / m2^{3/2}` with population central moments.
pub fn skewness(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Raw (non-excess) sample kurtosis `m4 / m2^2`; about 3 for Gaussian data.
pub fn kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2)
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Monte Carlo standard error of the mean of a (possibly autocorrelated)
/// chain, by non-overlapping batch means with `floor(sqrt(n))` batches.
pub fn batch_means_se(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return (variance(x) / n as f64).sqrt();
    }
    let n_batches = (n as f64).sqrt().floor() as usize;
    let batch = n / n_batches;
    let means: Vec<f64> = (0..n_batches).map(|b| mean(&x[b * batch..(b + 1) * batch])).collect();
    let var_batch = variance(&means);
    (var_batch / n_batches as f64).sqrt()
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1):
/// `(statistic, asymptotic p-value)`.
pub fn ks_uniform(x: &[f64]) -> (f64, f64) {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let u = u.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - u).max(u - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let z = d * (n.sqrt() + 0.12 + 0.11 / n.sqrt());
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * z * z).exp()
        })
        .sum::<f64>()
        * 2.0;
    (d, p.clamp(0.0, 1.0))
}

pub fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let t = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / t))
}

/// Sample covariance matrix of the columns of `m` (rows are observations).
pub fn sample_covariance(m: &DMatrix<f64>) -> DMatrix<f64> {
    let t = m.nrows();
    let means = column_means(m);
    let mut centered = m.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    centered.tr_mul(&centered) / (t as f64 - 1.0)
}

/// Sample cross-covariance `cov(a_i, b_j)` between the columns of two
/// row-aligned matrices.
pub fn cross_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let t = a.nrows();
    let ma = column_means(a);
    let mb = column_means(b);
    let mut ca = a.clone();
    for (j, mut col) in ca.column_iter_mut().enumerate() {
        col.add_scalar_mut(-ma[j]);
    }
    let mut cb = b.clone();
    for (j, mut col) in cb.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mb[j]);
    }
    ca.tr_mul(&cb) / (t as f64 - 1.0)
}
