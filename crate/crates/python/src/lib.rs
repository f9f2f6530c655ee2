//! Python bindings. Experiments take the same JSON configs as the CLI.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use levy_bsde::bsde_solver::{solve_lsmc, solve_markovian_grid};
use levy_bsde::config::{ExperimentConfig, Operation};
use levy_bsde::path_sim::Simulator;
use levy_bsde::rates::{self, RateReport};
use levy_bsde::rng::{path_stream, tag};
use levy_bsde::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Solver(_) | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn config(json: &str, op: Operation) -> PyResult<ExperimentConfig> {
    let cfg = ExperimentConfig::from_json(json).map_err(err)?;
    cfg.validate(op).map_err(err)?;
    Ok(cfg)
}

#[pyclass(name = "LevyModel", module = "levy_bsde_py", frozen)]
struct PyLevyModel {
    inner: levy_bsde::LevyModel,
}

#[pymethods]
impl PyLevyModel {
    #[staticmethod]
    #[pyo3(signature = (c=1.0, g=5.0, m=5.0, y=0.5))]
    fn cgmy(c: f64, g: f64, m: f64, y: f64) -> PyResult<Self> {
        Self::checked(levy_bsde::LevyModel::cgmy(c, g, m, y))
    }

    #[staticmethod]
    #[pyo3(signature = (intensity=1.0, mean=0.0, stdev=1.0))]
    fn merton(intensity: f64, mean: f64, stdev: f64) -> PyResult<Self> {
        Self::checked(levy_bsde::LevyModel::merton(intensity, mean, stdev))
    }

    #[staticmethod]
    fn stable_like(c_pos: f64, c_neg: f64, alpha: f64, lambda_pos: f64, lambda_neg: f64) -> PyResult<Self> {
        Self::checked(levy_bsde::LevyModel::stable_like(c_pos, c_neg, alpha, lambda_pos, lambda_neg))
    }

    #[staticmethod]
    fn harmonic() -> Self {
        PyLevyModel { inner: levy_bsde::LevyModel::harmonic() }
    }

    #[staticmethod]
    fn log_harmonic() -> Self {
        PyLevyModel { inner: levy_bsde::LevyModel::log_harmonic() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let m: levy_bsde::LevyModel = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Self::checked(m)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("model serializes")
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    /// Blumenthal–Getoor index β*.
    #[getter]
    fn bg_index(&self) -> f64 {
        self.inner.bg_index()
    }

    fn tail_mass(&self, eps: f64) -> PyResult<f64> {
        self.inner.tail_mass(eps).map_err(err)
    }

    /// `∫_{|x|<=eps} |x|^p ν(dx)`, or None when it diverges.
    fn partial_moment(&self, p: f64, eps: f64) -> PyResult<Option<f64>> {
        Ok(self.inner.partial_moment(p, eps).map_err(err)?.value())
    }

    fn second_moment_beyond(&self, eps: f64) -> PyResult<f64> {
        self.inner.second_moment_beyond(eps).map_err(err)
    }

    fn compensator_mean(&self, eps: f64) -> PyResult<f64> {
        self.inner.compensator_mean(eps).map_err(err)
    }

    fn c_beta(&self, beta: f64) -> PyResult<f64> {
        self.inner.c_beta(beta).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("LevyModel({})", self.to_json())
    }
}

impl PyLevyModel {
    fn checked(inner: levy_bsde::LevyModel) -> PyResult<Self> {
        inner.validate().map_err(err)?;
        Ok(PyLevyModel { inner })
    }
}

/// Jump times and sizes of one path of the level `eps`, uncompensated.
#[pyfunction]
#[pyo3(signature = (model, eps, horizon=1.0, seed=0, index=0))]
fn simulate_level(model: &PyLevyModel, eps: f64, horizon: f64, seed: u64, index: u64) -> PyResult<Vec<(f64, f64)>> {
    let sim = Simulator::new(&model.inner, eps, horizon).map_err(err)?;
    let mut rng = path_stream(seed, tag("python"), index);
    Ok(sim.simulate(&mut rng).jumps.iter().map(|j| (j.t, j.size)).collect())
}

fn rate_dict<'py>(py: Python<'py>, r: &RateReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("quantity", &r.quantity)?;
    d.set_item("model", r.model.name())?;
    d.set_item("levels", &r.levels)?;
    d.set_item("errors", r.errors.iter().map(|e| e.mean).collect::<Vec<_>>())?;
    d.set_item("se", r.errors.iter().map(|e| e.se).collect::<Vec<_>>())?;
    d.set_item("bound", &r.bound_curve)?;
    d.set_item("slope", r.fit.slope)?;
    d.set_item("ci", r.fit.ci)?;
    d.set_item("beta", r.beta)?;
    d.set_item("theory_slope", r.theory_slope)?;
    d.set_item("asymptotic_slope", r.asymptotic_slope)?;
    d.set_item("reference_bias_bound", r.reference_bias_bound)?;
    d.set_item("passed", r.passed())?;
    d.set_item("warnings", &r.warnings)?;
    Ok(d)
}

#[pyfunction]
fn rate_process<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let c = config(config_json, Operation::RateProcess)?;
    let r = py
        .detach(|| rates::run_process_rate(&c.model, &c.levels, c.eps_ref, c.paths, c.horizon, c.beta(), c.seed))
        .map_err(err)?;
    rate_dict(py, &r.report)
}

/// Returns the `(Y, U)` reports.
#[pyfunction]
#[pyo3(signature = (config_json, generator_gap=false))]
fn rate_bsde<'py>(py: Python<'py>, config_json: &str, generator_gap: bool) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
    let op = if generator_gap { Operation::RateGap } else { Operation::RateBsde };
    let c = config(config_json, op)?;
    let (p, rc) = (c.problem(), c.bsde_rate_config());
    let r = py
        .detach(|| {
            if generator_gap {
                rates::run_generator_gap_rate(&p, &c.levels, &rc, c.paths, c.beta(), c.seed)
            } else {
                rates::run_bsde_rate(&p, &c.levels, &rc, c.paths, c.beta(), c.seed)
            }
        })
        .map_err(err)?;
    Ok((rate_dict(py, &r.y)?, rate_dict(py, &r.u)?))
}

/// `(lower, upper, upper_se, ok)` per level of the config.
#[pyfunction]
fn wasserstein(py: Python<'_>, config_json: &str) -> PyResult<Vec<(u64, f64, f64, f64, bool)>> {
    let c = config(config_json, Operation::Wasserstein)?;
    py.detach(|| {
        c.levels
            .iter()
            .map(|&n| {
                rates::wasserstein_bounds(&c.model, n, c.eps_ref, c.paths, c.horizon, c.seed)
                    .map(|r| (n, r.lower, r.coupled_upper.mean, r.coupled_upper.se, r.ok))
            })
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(err)
}

/// Name, pass flag and number of bracket violations of each atomic example.
#[pyfunction]
fn boundary_check(n_max: u64) -> PyResult<Vec<(String, bool, usize)>> {
    let r = rates::check_bg_boundary_examples(n_max).map_err(err)?;
    Ok(r.examples.iter().map(|e| (e.name.to_string(), e.passed(), e.failures.len())).collect())
}

/// `(estimate, se, bound, passed)`.
#[pyfunction]
#[pyo3(signature = (horizon, k_n, paths=10_000, seed=0))]
fn appendix_gap(py: Python<'_>, horizon: f64, k_n: u64, paths: u64, seed: u64) -> PyResult<(f64, f64, f64, bool)> {
    let r = py.detach(|| rates::appendix_random_walk_gap(horizon, k_n, paths, seed)).map_err(err)?;
    Ok((r.estimate.mean, r.estimate.se, r.bound, r.passed))
}

/// Grid solution of the config's BSDE at level `n`: `(y0, nodes, u0)` at `t = 0`.
#[pyfunction]
fn solve_grid(py: Python<'_>, config_json: &str, n: u64) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    let c = config(config_json, Operation::RateBsde)?;
    let p = c.problem().at_level(1.0 / n as f64);
    let rc = c.bsde_rate_config();
    let sol = py.detach(|| solve_markovian_grid(&p, rc.steps, &rc.grid)).map_err(err)?;
    let nodes = (0..sol.xi.len()).map(|j| sol.node(0, j)).collect();
    Ok((sol.value(0, rc.x0), nodes, sol.values[0].clone()))
}

/// Regression estimate `(y0, se)` at level `n`.
#[pyfunction]
fn solve_regression(py: Python<'_>, config_json: &str, n: u64) -> PyResult<(f64, f64)> {
    let c = config(config_json, Operation::RateBsde)?;
    let p = c.problem().at_level(1.0 / n as f64);
    let s = &c.solver;
    let r = py.detach(|| solve_lsmc(&p, c.paths, s.degree, s.steps, s.x0, c.seed)).map_err(err)?;
    Ok((r.y0, r.se))
}

#[pymodule]
fn levy_bsde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLevyModel>()?;
    m.add_function(wrap_pyfunction!(simulate_level, m)?)?;
    m.add_function(wrap_pyfunction!(rate_process, m)?)?;
    m.add_function(wrap_pyfunction!(rate_bsde, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_check, m)?)?;
    m.add_function(wrap_pyfunction!(appendix_gap, m)?)?;
    m.add_function(wrap_pyfunction!(solve_grid, m)?)?;
    m.add_function(wrap_pyfunction!(solve_regression, m)?)?;
    Ok(())
}
