//! Python bindings: `import dpnv`.
//!
//! Vectors cross the boundary as lists of floats; datasets as a list of
//! demands plus a list of raw feature rows (the intercept is added here).

use dpnv_core::config::ExperimentConfig;
use dpnv_core::data::{self, ErrorDist, SyntheticSpec};
use dpnv_core::evaluation;
use dpnv_core::optimizer::{self, StepRule};
use dpnv_core::{privacy, Error, Kernel};
use nalgebra::DVector;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::FileNotFound(_) | Error::Io(_) | Error::Csv(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn kernel(name: &str) -> PyResult<Kernel> {
    name.parse().map_err(to_py)
}

/// Cost structure of a newsvendor problem.
#[pyclass(name = "Problem", frozen)]
struct PyProblem(dpnv_core::Problem);

#[pymethods]
impl PyProblem {
    #[new]
    fn new(b: f64, h: f64) -> PyResult<Self> {
        dpnv_core::Problem::new(b, h).map(Self).map_err(to_py)
    }

    /// Quantile form: b = tau, h = 1 - tau.
    #[staticmethod]
    fn from_quantile(tau: f64) -> PyResult<Self> {
        dpnv_core::Problem::from_quantile(tau).map(Self).map_err(to_py)
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau()
    }

    #[getter]
    fn tau_bar(&self) -> f64 {
        self.0.tau_bar()
    }

    fn __repr__(&self) -> String {
        format!("Problem(b={}, h={})", self.0.b(), self.0.h())
    }
}

/// Demands with an intercept-augmented design matrix.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset(dpnv_core::Dataset);

#[pymethods]
impl PyDataset {
    #[new]
    fn new(demands: Vec<f64>, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        dpnv_core::Dataset::from_raw_rows(demands, &rows).map(Self).map_err(to_py)
    }

    /// Draws the synthetic benchmark design; `dist` is normal, t3 or mixture.
    #[staticmethod]
    #[pyo3(signature = (n, dist = "normal", seed = 0))]
    fn synthetic(n: usize, dist: &str, seed: u64) -> PyResult<Self> {
        let dist: ErrorDist = dist.parse().map_err(to_py)?;
        data::generate_synthetic(&SyntheticSpec::benchmark(dist, n, seed)).map(Self).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (path, demand_column = "demand"))]
    fn from_csv(path: &str, demand_column: &str) -> PyResult<Self> {
        data::load_csv(path, demand_column).map(Self).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p()
    }

    fn demands(&self) -> Vec<f64> {
        self.0.demands().as_slice().to_vec()
    }

    /// Design rows, intercept first.
    fn features(&self) -> Vec<Vec<f64>> {
        (0..self.0.n()).map(|i| self.0.row(i).as_slice().to_vec()).collect()
    }

    /// Mean newsvendor cost of the linear policy `beta`.
    fn cost(&self, problem: &PyProblem, beta: Vec<f64>) -> PyResult<f64> {
        let policy = dpnv_core::LinearPolicy::new(DVector::from_vec(beta));
        evaluation::out_of_sample_cost(&problem.0, &policy, &self.0).map_err(to_py)
    }
}

/// Output of a private fit.
#[pyclass(name = "FitResult", frozen, get_all)]
struct PyFitResult {
    beta: Vec<f64>,
    sigma: f64,
    /// `(mu, epsilon, delta)` when certified.
    certificate: Option<(f64, f64, f64)>,
    step_sizes: Vec<f64>,
    gradient_norms: Vec<f64>,
}

/// Noisy smoothed gradient descent from zero. `bandwidth` and `eta0`
/// default to the automatic rules; `schedule` is "frozen" or "backtracking".
#[pyfunction]
#[pyo3(signature = (
    dataset, problem, mu, iterations = 10, clip = 2.0, seed = 0, kernel_name = "gaussian",
    bandwidth = None, eta0 = None, mode = "raw", schedule = "frozen"
))]
#[allow(clippy::too_many_arguments)]
fn fit_private(
    dataset: &PyDataset,
    problem: &PyProblem,
    mu: f64,
    iterations: usize,
    clip: f64,
    seed: u64,
    kernel_name: &str,
    bandwidth: Option<f64>,
    eta0: Option<f64>,
    mode: &str,
    schedule: &str,
) -> PyResult<PyFitResult> {
    let (d, prob) = (&dataset.0, &problem.0);
    let k = kernel(kernel_name)?;
    let bw = bandwidth.unwrap_or_else(|| optimizer::default_bandwidth(prob.tau(), d.n().max(2), d.p()));
    let beta0 = DVector::zeros(d.p());
    let backtrack = match schedule {
        "frozen" => false,
        "backtracking" => true,
        other => return Err(PyValueError::new_err(format!("unknown schedule `{other}`; use frozen or backtracking"))),
    };
    let eta0 = match (eta0, backtrack) {
        (Some(v), _) => v,
        (None, false) => optimizer::backtracking_step_size(d, prob, k, bw, &beta0, 0.5, 0.3).map_err(to_py)?,
        (None, true) => 1.0,
    };
    let mut hp = dpnv_core::HyperParams::private(prob, mu, bw, eta0, clip, iterations, k, seed).map_err(to_py)?;
    if backtrack {
        hp.step_rule = StepRule::Backtracking { shrink: 0.5, c: 0.3 };
    }
    let whitener = match mode {
        "raw" => None,
        "known_covariance" => {
            hp.mode = dpnv_core::UpdateMode::KnownCovariance;
            Some(data::whitener_from(data::WhitenerSource::Empirical(d)).map_err(to_py)?)
        }
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`; use raw or known_covariance"))),
    };
    let res = optimizer::fit(d, prob, &hp, &beta0, whitener.as_ref()).map_err(to_py)?;
    Ok(PyFitResult {
        beta: res.beta_final.as_slice().to_vec(),
        sigma: hp.sigma,
        certificate: res.certificate.map(|c| (c.mu, c.eps_delta_at_mu.epsilon, c.eps_delta_at_mu.delta)),
        step_sizes: res.step_sizes,
        gradient_norms: res.gradient_norms,
    })
}

/// Non-private minimizer of the smoothed empirical cost.
#[pyfunction]
#[pyo3(signature = (dataset, problem, kernel_name = "gaussian", bandwidth = None, tol = 1e-8, max_iter = 100_000))]
fn smoothed_erm(
    dataset: &PyDataset,
    problem: &PyProblem,
    kernel_name: &str,
    bandwidth: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<Vec<f64>> {
    let (d, prob) = (&dataset.0, &problem.0);
    let bw = bandwidth.unwrap_or_else(|| optimizer::default_bandwidth(prob.tau(), d.n().max(2), d.p()));
    optimizer::smoothed_erm(d, prob, kernel(kernel_name)?, bw, tol, max_iter)
        .map(|b| b.as_slice().to_vec())
        .map_err(to_py)
}

#[pyfunction]
fn smoothed_check_loss(kernel_name: &str, bandwidth: f64, tau: f64, u: f64) -> PyResult<f64> {
    kernel(kernel_name)?.smoothed_check_loss(bandwidth, tau, u).map_err(to_py)
}

#[pyfunction]
fn default_bandwidth(tau: f64, n: usize, p: usize) -> f64 {
    optimizer::default_bandwidth(tau, n, p)
}

#[pyfunction]
#[pyo3(signature = (mu, clip, iterations, tau_bar, round_up = true))]
fn calibrate_sigma(mu: f64, clip: f64, iterations: usize, tau_bar: f64, round_up: bool) -> PyResult<f64> {
    privacy::calibrate_sigma(mu, clip, iterations, tau_bar, round_up).map_err(to_py)
}

#[pyfunction]
fn gdp_tradeoff(mu: f64, alpha: f64) -> PyResult<f64> {
    privacy::gdp_tradeoff(mu, alpha).map_err(to_py)
}

#[pyfunction]
fn compose_gdp(mus: Vec<f64>) -> PyResult<f64> {
    privacy::compose_gdp(&mus).map_err(to_py)
}

/// `(epsilon, delta)` with `epsilon = mu`.
#[pyfunction]
fn gdp_to_eps_delta(mu: f64) -> PyResult<(f64, f64)> {
    privacy::gdp_to_eps_delta(mu).map(|e| (e.epsilon, e.delta)).map_err(to_py)
}

/// Runs a TOML experiment config; returns `(rows_csv, table_csv)` text.
#[pyfunction]
fn run_bench(config_toml: &str) -> PyResult<(String, String)> {
    let cfg = ExperimentConfig::parse(config_toml).map_err(to_py)?;
    let report = evaluation::run_replications(&cfg).map_err(to_py)?;
    let (mut rows, mut table) = (Vec::new(), Vec::new());
    report.write_rows_csv(&mut rows).map_err(to_py)?;
    report.write_table_csv(&mut table).map_err(to_py)?;
    Ok((String::from_utf8_lossy(&rows).into_owned(), String::from_utf8_lossy(&table).into_owned()))
}

#[pymodule]
fn dpnv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit_private, m)?)?;
    m.add_function(wrap_pyfunction!(smoothed_erm, m)?)?;
    m.add_function(wrap_pyfunction!(smoothed_check_loss, m)?)?;
    m.add_function(wrap_pyfunction!(default_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(gdp_tradeoff, m)?)?;
    m.add_function(wrap_pyfunction!(compose_gdp, m)?)?;
    m.add_function(wrap_pyfunction!(gdp_to_eps_delta, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
