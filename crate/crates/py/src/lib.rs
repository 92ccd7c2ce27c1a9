//! Python extension module exposing the main types and operations:
//! innovation statistics and sampling, ARMA/VAR simulation, the observation
//! channel, the gamma KL, and the particle filter. Matrices cross the
//! boundary as nested lists; every random operation takes an explicit seed.

// The pyfunction macro expands to an Into conversion that newer clippy
// flags on every wrapper.
#![allow(clippy::useless_conversion)]

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sisr_core::{
    ArmaModel as CoreArmaModel, Dataset, Error, FgnSpec, FilterConfig, GammaNoiseParams,
    HurstExponent, ObservationChannel, ResamplingScheme, VarModel as CoreVarModel,
};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spec(hurst: f64, sigma2: f64) -> PyResult<FgnSpec> {
    let h = HurstExponent::new(hurst).map_err(err)?;
    FgnSpec::new(h, sigma2).map_err(err)
}

fn noise(alpha: f64, beta: f64) -> PyResult<GammaNoiseParams> {
    GammaNoiseParams::new(alpha, beta).map_err(err)
}

/// A matrix crossing the Python boundary: one list per series/row.
type Rows = Vec<Vec<f64>>;

fn matrix_to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn resampling_from(name: &str) -> PyResult<ResamplingScheme> {
    match name {
        "paper" => Ok(ResamplingScheme::PaperScheme),
        "systematic" => Ok(ResamplingScheme::Systematic),
        other => Err(PyValueError::new_err(format!(
            "unknown resampling scheme `{other}` (expected `paper` or `systematic`)"
        ))),
    }
}

/// Normalized innovation autocorrelation at an integer lag.
#[pyfunction]
fn fgn_autocorrelation(tau: i64, hurst: f64) -> PyResult<f64> {
    let h = HurstExponent::new(hurst).map_err(err)?;
    Ok(sisr_core::fgn_autocorrelation(tau, h))
}

/// Covariance matrix of `t` consecutive innovations, as nested lists.
#[pyfunction]
fn fgn_covariance(t: usize, hurst: f64, sigma2: f64) -> PyResult<Rows> {
    let cov = sisr_core::fgn_covariance(t, &spec(hurst, sigma2)?).map_err(err)?;
    Ok(matrix_to_rows(cov.entries()))
}

/// One joint innovation draw of length `t`.
#[pyfunction]
fn sample_fgn(t: usize, hurst: f64, sigma2: f64, seed: u64) -> PyResult<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sisr_core::sample_fgn(t, &spec(hurst, sigma2)?, &mut rng).map_err(err)
}

/// Conditional law (mean, variance) of the next innovation given a history.
#[pyfunction]
fn fgn_conditional(history: Vec<f64>, hurst: f64, sigma2: f64) -> PyResult<(f64, f64)> {
    sisr_core::fgn_conditional(history.len() + 1, &history, &spec(hurst, sigma2)?).map_err(err)
}

/// Mean of the gamma noise law, `alpha * beta`.
#[pyfunction]
fn noise_mean(alpha: f64, beta: f64) -> PyResult<f64> {
    Ok(noise(alpha, beta)?.mean())
}

/// IID gamma noise draws.
#[pyfunction]
fn sample_noise(alpha: f64, beta: f64, count: usize, seed: u64) -> PyResult<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sisr_core::sample_noise(&noise(alpha, beta)?, count, &mut rng).map_err(err)
}

/// One observation of a latent state through the channel.
#[pyfunction]
fn observe(x: f64, alpha: f64, beta: f64, seed: u64) -> PyResult<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sisr_core::observe(x, &noise(alpha, beta)?, &mut rng))
}

/// Log density of an observation given the latent state.
#[pyfunction]
fn log_likelihood(z: f64, x: f64, alpha: f64, beta: f64) -> PyResult<f64> {
    sisr_core::log_likelihood(z, x, &noise(alpha, beta)?).map_err(err)
}

/// Analytic KL divergence between two gamma laws in shape-scale form.
#[pyfunction]
fn kl_gamma(q_alpha: f64, q_beta: f64, p_alpha: f64, p_beta: f64) -> PyResult<f64> {
    Ok(sisr_core::kl_gamma(
        &noise(q_alpha, q_beta)?,
        &noise(p_alpha, p_beta)?,
    ))
}

/// ARMA model over correlated innovations.
#[pyclass]
#[derive(Clone)]
struct ArmaModel {
    inner: CoreArmaModel,
}

#[pymethods]
impl ArmaModel {
    #[new]
    #[pyo3(signature = (ar, ma, hurst, sigma2=1.0))]
    fn new(ar: Vec<f64>, ma: Vec<f64>, hurst: f64, sigma2: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreArmaModel::new(ar, ma, spec(hurst, sigma2)?).map_err(err)?,
        })
    }

    /// Simulates `t` steps; returns (states, innovations).
    fn simulate(&self, t: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traj = sisr_core::simulate_recursive(&self.inner, t, &mut rng).map_err(err)?;
        Ok((traj.states, traj.innovations))
    }

    /// Dense transfer matrix mapping innovations to states.
    fn transfer_matrix(&self, t: usize) -> PyResult<Rows> {
        let tm = sisr_core::build_transition_matrices(&self.inner, t).map_err(err)?;
        Ok(matrix_to_rows(&sisr_core::transfer_matrix(&tm)))
    }

    /// State covariance matrix over a horizon.
    fn state_covariance(&self, t: usize) -> PyResult<Rows> {
        let cov = sisr_core::state_covariance(&self.inner, t).map_err(err)?;
        Ok(matrix_to_rows(cov.entries()))
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Filter output: per-step estimates and diagnostics.
#[pyclass]
struct FilterReport {
    #[pyo3(get)]
    estimates: Vec<f64>,
    #[pyo3(get)]
    rmse_trace: Option<Vec<f64>>,
    #[pyo3(get)]
    ess_trace: Vec<f64>,
    #[pyo3(get)]
    resample_counts: Vec<usize>,
    #[pyo3(get)]
    final_rmse: Option<f64>,
}

impl From<sisr_core::FilterReport> for FilterReport {
    fn from(report: sisr_core::FilterReport) -> Self {
        Self {
            final_rmse: report.final_rmse(),
            estimates: report.estimates,
            rmse_trace: report.rmse_trace,
            ess_trace: report.ess_trace,
            resample_counts: report.resample_counts,
        }
    }
}

/// Runs the particle filter over an observation sequence.
#[pyfunction]
#[pyo3(signature = (model, observations, truth=None, n_particles=1000,
                    resampling="paper", seed=0, alpha=0.5, beta=1.0))]
#[allow(clippy::too_many_arguments)]
fn run_filter(
    model: &ArmaModel,
    observations: Vec<f64>,
    truth: Option<Vec<f64>>,
    n_particles: usize,
    resampling: &str,
    seed: u64,
    alpha: f64,
    beta: f64,
) -> PyResult<FilterReport> {
    let config = FilterConfig {
        n_particles,
        resampling: resampling_from(resampling)?,
        seed,
        channel: ObservationChannel::log_volatility(noise(alpha, beta)?),
        resample_threshold: None,
    };
    let report = sisr_core::run_filter(&model.inner, &config, &observations, truth.as_deref())
        .map_err(err)?;
    Ok(report.into())
}

/// VAR model with per-dimension innovations sharing a Hurst exponent.
#[pyclass]
#[derive(Clone)]
struct VarModel {
    inner: CoreVarModel,
}

#[pymethods]
impl VarModel {
    #[new]
    #[pyo3(signature = (weights, hurst, sigma2=1.0))]
    fn new(weights: Vec<Vec<Vec<f64>>>, hurst: f64, sigma2: f64) -> PyResult<Self> {
        let n = weights
            .first()
            .map(|m| m.len())
            .ok_or_else(|| PyValueError::new_err("at least one weight matrix required"))?;
        let matrices: Vec<DMatrix<f64>> = weights
            .iter()
            .enumerate()
            .map(|(lag, rows)| {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(PyValueError::new_err(format!(
                        "weight matrix for lag {} must be {n}x{n}",
                        lag + 1
                    )));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            })
            .collect::<PyResult<_>>()?;
        Ok(Self {
            inner: CoreVarModel::new(matrices, vec![spec(hurst, sigma2)?; n]).map_err(err)?,
        })
    }

    /// Simulates `t` steps; returns one list per series.
    fn simulate(&self, t: usize, seed: u64) -> PyResult<Rows> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = sisr_core::simulate_var(&self.inner, t, &mut rng).map_err(err)?;
        Ok(matrix_to_rows(&states))
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Filters a masked panel and imputes its missing cells. `values` holds one
/// list per series; `mask` flags missing cells (ignored entries of `values`).
/// Returns (imputed_values, estimates) as lists per series.
#[pyfunction]
#[pyo3(signature = (model, values, mask, n_particles=1000, resampling="paper",
                    seed=0, alpha=0.5, beta=1.0))]
#[allow(clippy::too_many_arguments)]
fn filter_impute(
    model: &VarModel,
    values: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
    n_particles: usize,
    resampling: &str,
    seed: u64,
    alpha: f64,
    beta: f64,
) -> PyResult<(Rows, Rows)> {
    let n = values.len();
    if n == 0 || mask.len() != n {
        return Err(PyValueError::new_err(
            "values and mask must have the same non-zero series count",
        ));
    }
    let horizon = values[0].len();
    if values.iter().any(|v| v.len() != horizon) || mask.iter().any(|m| m.len() != horizon) {
        return Err(PyValueError::new_err("ragged values or mask"));
    }
    let matrix = DMatrix::from_fn(n, horizon, |d, t| values[d][t]);
    let mut missing = vec![false; n * horizon];
    for d in 0..n {
        for t in 0..horizon {
            missing[d * horizon + t] = mask[d][t];
        }
    }
    let labels = (0..n).map(|d| format!("series{d}")).collect();
    let data = Dataset::new(matrix, missing, labels).map_err(err)?;
    let config = FilterConfig {
        n_particles,
        resampling: resampling_from(resampling)?,
        seed,
        channel: ObservationChannel::log_volatility(noise(alpha, beta)?),
        resample_threshold: None,
    };
    let reports = sisr_core::filter_dataset(&model.inner, &data, &config, None).map_err(err)?;
    let filled = sisr_core::impute(&reports, &data).map_err(err)?;
    let estimates = reports.iter().map(|r| r.estimates.clone()).collect();
    Ok((matrix_to_rows(filled.values()), estimates))
}

#[pymodule]
fn sisr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fgn_autocorrelation, m)?)?;
    m.add_function(wrap_pyfunction!(fgn_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(sample_fgn, m)?)?;
    m.add_function(wrap_pyfunction!(fgn_conditional, m)?)?;
    m.add_function(wrap_pyfunction!(noise_mean, m)?)?;
    m.add_function(wrap_pyfunction!(sample_noise, m)?)?;
    m.add_function(wrap_pyfunction!(observe, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(kl_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(run_filter, m)?)?;
    m.add_function(wrap_pyfunction!(filter_impute, m)?)?;
    m.add_class::<ArmaModel>()?;
    m.add_class::<VarModel>()?;
    m.add_class::<FilterReport>()?;
    Ok(())
}
