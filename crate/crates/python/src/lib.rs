//! Python bindings for the `maxent` crate.
//!
//! Points and matrices cross the boundary as plain lists of floats.

use maxent::approximator::{self, Dataset};
use maxent::dynamics::{self, IntegrateError, SurrogateModel, Trajectory};
use maxent::geometry::{self, Membership};
use maxent::maxent::SolverOptions;
use maxent::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(maxent_py, OutsideHullError, PyValueError);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::OutsideHull { .. } => OutsideHullError::new_err(err.to_string()),
        Error::Fit { .. } | Error::NotConverged { .. } => PyRuntimeError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn options(tol: Option<f64>, max_iter: Option<usize>) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(t) = tol {
        opts.tol = t;
    }
    if let Some(m) = max_iter {
        opts.max_iter = m;
    }
    opts
}

#[pyclass(name = "NodeSet", module = "maxent_py", frozen)]
pub struct PyNodeSet {
    inner: geometry::NodeSet,
}

#[pymethods]
impl PyNodeSet {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyNodeSet {
            inner: geometry::NodeSet::from_rows(rows).map_err(to_py)?,
        })
    }

    /// Tensor grid with `counts[k]` nodes over `bounds[k]`.
    #[staticmethod]
    fn grid(bounds: Vec<(f64, f64)>, counts: Vec<usize>) -> PyResult<Self> {
        Ok(PyNodeSet {
            inner: geometry::grid_nodes(&bounds, &counts).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    /// `"interior"`, `"boundary"` or `"outside"`.
    #[pyo3(signature = (x, tol = geometry::DEFAULT_HULL_TOL))]
    fn in_hull(&self, x: Vec<f64>, tol: f64) -> PyResult<&'static str> {
        let m = geometry::in_hull(&self.inner, &x, tol).map_err(to_py)?;
        Ok(match m.status {
            Membership::Interior => "interior",
            Membership::Boundary => "boundary",
            Membership::Outside => "outside",
        })
    }

    fn __repr__(&self) -> String {
        format!("NodeSet(len={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

/// Local max-ent weights of `x`.
#[pyfunction]
#[pyo3(signature = (nodes, x, beta, tol = None, max_iter = None))]
fn solve_basis(nodes: &PyNodeSet, x: Vec<f64>, beta: f64, tol: Option<f64>, max_iter: Option<usize>) -> PyResult<Vec<f64>> {
    let eval = maxent::maxent::solve_basis(&nodes.inner, &x, beta, &options(tol, max_iter)).map_err(to_py)?;
    if !eval.converged {
        return Err(PyRuntimeError::new_err(format!(
            "basis solve stopped with residual {:e}",
            eval.residual
        )));
    }
    Ok(eval.weights)
}

#[pyclass(name = "Approximant", module = "maxent_py", frozen)]
pub struct PyApproximant {
    inner: approximator::Approximant,
}

#[pymethods]
impl PyApproximant {
    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients.clone()
    }

    #[getter]
    fn training_rms(&self) -> f64 {
        self.inner.fit_report.training_rms
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        approximator::predict(&self.inner, &x).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Fits a scalar approximant to `values` sampled at `points`.
#[pyfunction]
#[pyo3(signature = (nodes, points, values, beta, alpha = 0.0))]
fn fit(nodes: &PyNodeSet, points: Vec<Vec<f64>>, values: Vec<f64>, beta: f64, alpha: f64) -> PyResult<PyApproximant> {
    let data = Dataset::from_rows(points, values.into_iter().map(|v| vec![v]).collect()).map_err(to_py)?;
    let inner = approximator::fit(&nodes.inner, &data, beta, alpha, &SolverOptions::default()).map_err(to_py)?;
    Ok(PyApproximant { inner })
}

#[pyclass(name = "Surrogate", module = "maxent_py", frozen)]
pub struct PySurrogate {
    inner: SurrogateModel,
}

fn trajectory_lists(t: &Trajectory) -> (Vec<f64>, Vec<Vec<f64>>) {
    (t.times.clone(), t.states.clone())
}

#[pymethods]
impl PySurrogate {
    #[getter]
    fn coefficients(&self) -> Vec<Vec<f64>> {
        self.inner.coefficients.clone()
    }

    #[getter]
    fn training_rms(&self) -> Vec<f64> {
        self.inner.fit_reports.iter().map(|r| r.training_rms).collect()
    }

    fn eval(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        dynamics::eval_field(&self.inner, &x).map_err(to_py)
    }

    /// RK4 rollout from `x0`. Returns `(times, states, outcome)` where
    /// `outcome` is `"completed"`, `"left-domain"` or `"blowup"`; the
    /// trajectory is truncated at the last valid state.
    fn integrate(&self, x0: Vec<f64>, t0: f64, t1: f64, dt: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, &'static str)> {
        match dynamics::integrate(&self.inner, &x0, (t0, t1), dt) {
            Ok(t) => {
                let (a, b) = trajectory_lists(&t);
                Ok((a, b, "completed"))
            }
            Err(IntegrateError::DomainExit { partial, .. }) => {
                let (a, b) = trajectory_lists(&partial);
                Ok((a, b, "left-domain"))
            }
            Err(IntegrateError::NumericalBlowup { partial, .. }) => {
                let (a, b) = trajectory_lists(&partial);
                Ok((a, b, "blowup"))
            }
            Err(IntegrateError::Invalid(e)) => Err(to_py(e)),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Fits a vector field `dx/dt` from states and derivative samples.
#[pyfunction]
#[pyo3(signature = (nodes, states, derivatives, beta, alpha = 0.0))]
fn fit_dynamics(
    nodes: &PyNodeSet,
    states: Vec<Vec<f64>>,
    derivatives: Vec<Vec<f64>>,
    beta: f64,
    alpha: f64,
) -> PyResult<PySurrogate> {
    let data = Dataset::from_rows(states, derivatives).map_err(to_py)?;
    let inner = dynamics::fit_dynamics(&nodes.inner, &data, beta, alpha, &SolverOptions::default()).map_err(to_py)?;
    Ok(PySurrogate { inner })
}

/// Runs a named benchmark. `overrides` is TOML text merged over the preset.
/// Returns `(report_json, runtime_seconds)`.
#[pyfunction]
#[pyo3(signature = (name, overrides = ""))]
fn run_experiment(py: Python<'_>, name: &str, overrides: &str) -> PyResult<(String, f64)> {
    let table: toml::Table = overrides.parse().map_err(|e: toml::de::Error| PyValueError::new_err(e.to_string()))?;
    let out = py
        .detach(|| maxent::bench::run_experiment(name, &table))
        .map_err(to_py)?;
    let json = serde_json::to_string(&out.report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((json, out.runtime))
}

#[pymodule]
fn maxent_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNodeSet>()?;
    m.add_class::<PyApproximant>()?;
    m.add_class::<PySurrogate>()?;
    m.add_function(wrap_pyfunction!(solve_basis, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("OutsideHullError", m.py().get_type::<OutsideHullError>())?;
    Ok(())
}
