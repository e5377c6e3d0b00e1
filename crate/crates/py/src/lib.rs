//! Python bindings: posterior estimation from CSV panels plus the
//! volatility and portfolio helpers.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use zoo_sdf::dynamics;
use zoo_sdf::gibbs::{run_chains, ChainOptions};
use zoo_sdf::panel::{load_panel, standardize};
use zoo_sdf::prior::{self, PriorConfig, PsiSpec};
use zoo_sdf::report::{to_json, EstimateReport};
use zoo_sdf::{trader, ErrorKind};

create_exception!(zoo_sdf_py, ZooSdfError, PyException);
create_exception!(zoo_sdf_py, UsageError, ZooSdfError);
create_exception!(zoo_sdf_py, DataError, ZooSdfError);
create_exception!(zoo_sdf_py, NumericalError, ZooSdfError);

fn to_py(e: zoo_sdf::Error) -> PyErr {
    let msg = e.to_string();
    match e.kind() {
        ErrorKind::Usage => UsageError::new_err(msg),
        ErrorKind::Data => DataError::new_err(msg),
        ErrorKind::Numerical => NumericalError::new_err(msg),
    }
}

fn prior_config(prior_sr: f64) -> zoo_sdf::Result<PriorConfig> {
    let cfg = PriorConfig {
        psi: PsiSpec::SrFraction(prior_sr),
        ..PriorConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

#[allow(clippy::too_many_arguments)]
fn estimate_json(
    returns: PathBuf,
    factors: PathBuf,
    meta: PathBuf,
    prior_sr: f64,
    draws: usize,
    burn_in: usize,
    chains: usize,
    seed: u64,
    top: usize,
) -> zoo_sdf::Result<String> {
    let cfg = prior_config(prior_sr)?;
    let opts = ChainOptions::new(draws, burn_in, 1, seed);
    opts.validate()?;
    let panel = standardize(&load_panel(&returns, &factors, &meta)?)?;
    let posterior = run_chains(&panel, &cfg, &opts, chains)?;
    to_json(&EstimateReport::build(&posterior, &panel, top, false)?)
}

/// Estimate the BMA posterior of a panel stored as three CSV files and
/// return the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (returns, factors, meta, prior_sr = 0.8, draws = 25_000, burn_in = 5_000, chains = 4, seed = 0, top = 5))]
#[allow(clippy::too_many_arguments)]
fn estimate(
    py: Python<'_>,
    returns: PathBuf,
    factors: PathBuf,
    meta: PathBuf,
    prior_sr: f64,
    draws: usize,
    burn_in: usize,
    chains: usize,
    seed: u64,
    top: usize,
) -> PyResult<String> {
    py.detach(|| estimate_json(returns, factors, meta, prior_sr, draws, burn_in, chains, seed, top))
        .map_err(to_py)
}

/// Months for a GARCH(1,1) variance shock to halve.
#[pyfunction]
fn half_life(alpha: f64, beta: f64) -> PyResult<f64> {
    dynamics::half_life(alpha, beta).map_err(to_py)
}

/// Beta `(a, b)` for an expected model size and a 95% half-width.
#[pyfunction]
fn sparsity_hyperparams(k: usize, target_mean: f64, halfwidth: f64) -> PyResult<(f64, f64)> {
    prior::sparsity_hyperparams(k, target_mean, halfwidth).map_err(to_py)
}

/// Ljung-Box `(statistic, p_value)`.
#[pyfunction]
fn ljung_box(series: Vec<f64>, lags: usize) -> PyResult<(f64, f64)> {
    let lb = dynamics::ljung_box(&series, lags).map_err(to_py)?;
    Ok((lb.statistic, lb.p_value))
}

#[pyfunction]
fn fit_garch11<'py>(py: Python<'py>, residuals: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let fit = py.detach(|| dynamics::fit_garch11(&residuals)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("omega", fit.omega)?;
    d.set_item("alpha", fit.alpha)?;
    d.set_item("beta", fit.beta)?;
    d.set_item("robust_se", fit.robust_se.to_vec())?;
    d.set_item("loglik", fit.loglik)?;
    d.set_item("near_integrated", fit.near_integrated)?;
    d.set_item("conditional_variance", fit.conditional_variance)?;
    Ok(d)
}

/// Portfolio weights proportional to the prices of risk, summing to one.
#[pyfunction]
fn portfolio_weights(mprs: Vec<f64>) -> PyResult<Vec<f64>> {
    trader::portfolio_weights(&mprs).map_err(to_py)
}

#[pymodule]
fn zoo_sdf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("ZooSdfError", py.get_type::<ZooSdfError>())?;
    m.add("UsageError", py.get_type::<UsageError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(half_life, m)?)?;
    m.add_function(wrap_pyfunction!(sparsity_hyperparams, m)?)?;
    m.add_function(wrap_pyfunction!(ljung_box, m)?)?;
    m.add_function(wrap_pyfunction!(fit_garch11, m)?)?;
    m.add_function(wrap_pyfunction!(portfolio_weights, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_fraction_is_validated() {
        assert!(prior_config(0.6).is_ok());
        assert_eq!(prior_config(1.5).unwrap_err().kind(), ErrorKind::Usage);
    }

    #[test]
    fn missing_files_are_data_errors() {
        let missing = PathBuf::from("/nonexistent/returns.csv");
        let err = estimate_json(missing.clone(), missing.clone(), missing, 0.8, 100, 10, 1, 0, 5).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Data);
    }
}
