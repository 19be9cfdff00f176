//! Python bindings for the switchgrid solver.
//!
//! Regimes are zero-based, as in the Rust API.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;
use switchgrid::harness::{self, CounterexampleOracle, Oracle, VerifyOptions};
use switchgrid::simulate::PayoffEstimate;
use switchgrid::{
    build_grid, builtin_counterexample, builtin_pumped_storage, load_model, parse_model, Action, ExtValue, GridSpec,
    ModelSpec, PenaltyLevel, PumpedStorageParams, SchemeParams,
};

create_exception!(switchgrid, SwitchgridError, PyException, "Error raised by the switchgrid solver.");

fn err(e: switchgrid::Error) -> PyErr {
    SwitchgridError::new_err(e.to_string())
}

fn penalty(n: u32) -> PyResult<PenaltyLevel> {
    PenaltyLevel::new(n).map_err(err)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SwitchgridError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A switching model: regimes, coefficients, costs, constraint and horizon.
#[pyclass(frozen, module = "switchgrid")]
pub struct Model {
    spec: ModelSpec,
    counterexample: Option<(f64, f64)>,
}

#[pymethods]
impl Model {
    /// The two-dimensional, two-regime model with a closed-form value.
    #[staticmethod]
    #[pyo3(signature = (horizon = 1.0, cost = 0.5))]
    fn counterexample(horizon: f64, cost: f64) -> PyResult<Self> {
        let spec = builtin_counterexample(horizon, cost).map_err(err)?;
        Ok(Model { spec, counterexample: Some((horizon, cost)) })
    }

    /// The three-regime reservoir model with a mean-reverting price.
    #[staticmethod]
    #[pyo3(signature = (
        level_max = 1.0, reversion = 1.0, mean_price = 10.0, price_vol = 2.0,
        switch_cost = 0.2, horizon = 1.0, initial_level = 0.5, initial_price = 10.0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn pumped_storage(
        level_max: f64,
        reversion: f64,
        mean_price: f64,
        price_vol: f64,
        switch_cost: f64,
        horizon: f64,
        initial_level: f64,
        initial_price: f64,
    ) -> PyResult<Self> {
        let params = PumpedStorageParams { horizon, reversion, mean_price, price_vol, switch_cost };
        let spec = builtin_pumped_storage(level_max, params, initial_level, initial_price).map_err(err)?;
        Ok(Model { spec, counterexample: None })
    }

    /// Parses a model file's JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model { spec: parse_model(text).map_err(err)?, counterexample: None })
    }

    /// Reads a model file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model { spec: load_model(&path).map_err(err)?, counterexample: None })
    }

    #[getter]
    fn name(&self) -> &str {
        self.spec.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    #[getter]
    fn regimes(&self) -> usize {
        self.spec.regimes()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.spec.horizon()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.spec.fingerprint()
    }

    fn __repr__(&self) -> String {
        format!("Model(name={:?}, dim={}, regimes={})", self.spec.name(), self.spec.dim(), self.spec.regimes())
    }
}

impl Model {
    fn oracle(&self) -> Option<CounterexampleOracle> {
        self.counterexample.map(|(horizon, cost)| CounterexampleOracle::new(horizon, cost))
    }
}

/// Tensor-product space grid with a uniform time partition.
#[pyclass(frozen, module = "switchgrid")]
pub struct Grid {
    inner: Arc<switchgrid::Grid>,
}

#[pymethods]
impl Grid {
    /// Builds the grid for `model`; `time_steps` defaults to the smallest
    /// count meeting the stability bound.
    #[new]
    #[pyo3(signature = (model, bounds, points, time_steps = None))]
    fn new(model: &Model, bounds: Vec<(f64, f64)>, points: Vec<usize>, time_steps: Option<usize>) -> PyResult<Self> {
        let grid = build_grid(&model.spec, &GridSpec::new(bounds, points, time_steps)).map_err(err)?;
        Ok(Grid { inner: Arc::new(grid) })
    }

    #[getter]
    fn points(&self) -> Vec<usize> {
        self.inner.spec().points.clone()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn time_steps(&self) -> usize {
        self.inner.time_steps()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    #[getter]
    fn cfl_bound(&self) -> f64 {
        self.inner.cfl_bound()
    }

    fn time(&self, level: usize) -> PyResult<f64> {
        if level > self.inner.time_steps() {
            return Err(SwitchgridError::new_err(format!("time level {level} is past the horizon")));
        }
        Ok(self.inner.time(level))
    }

    fn coordinates(&self, node: usize) -> PyResult<Vec<f64>> {
        self.check_node(node)?;
        Ok(self.inner.coordinates(node))
    }

    fn in_domain(&self, node: usize) -> PyResult<bool> {
        self.check_node(node)?;
        Ok(self.inner.in_domain(node))
    }

    fn nearest_node(&self, x: Vec<f64>) -> Option<usize> {
        self.inner.nearest_node(&x)
    }

    fn __repr__(&self) -> String {
        format!("Grid(points={:?}, time_steps={})", self.inner.spec().points, self.inner.time_steps())
    }
}

impl Grid {
    fn check_node(&self, node: usize) -> PyResult<()> {
        if node >= self.inner.node_count() {
            return Err(SwitchgridError::new_err(format!("node {node} out of range")));
        }
        Ok(())
    }
}

/// Solved value function on every (time level, node, regime).
#[pyclass(frozen, module = "switchgrid")]
pub struct ValueField {
    inner: switchgrid::ValueField,
}

#[pymethods]
impl ValueField {
    #[getter]
    fn penalty(&self) -> u32 {
        self.inner.penalty().get()
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.levels()
    }

    #[getter]
    fn regimes(&self) -> usize {
        self.inner.regimes()
    }

    fn get(&self, level: usize, node: usize, regime: usize) -> PyResult<f64> {
        self.check(level, node, regime)?;
        Ok(self.inner.get(level, node, regime))
    }

    /// Multilinear interpolation in space at the nearest time level.
    fn interp(&self, t: f64, x: Vec<f64>, regime: usize) -> PyResult<f64> {
        if regime >= self.inner.regimes() {
            return Err(SwitchgridError::new_err(format!("regime {regime} out of range")));
        }
        self.inner.interp(t, &x, regime).map_err(err)
    }

    /// Values at one time level, ordered by node then regime.
    fn level(&self, level: usize) -> PyResult<Vec<f64>> {
        self.check(level, 0, 0)?;
        Ok(self.inner.level(level).to_vec())
    }
}

impl ValueField {
    fn check(&self, level: usize, node: usize, regime: usize) -> PyResult<()> {
        if level >= self.inner.levels() || node >= self.inner.grid().node_count() || regime >= self.inner.regimes() {
            return Err(SwitchgridError::new_err(format!("entry ({level}, {node}, {regime}) out of range")));
        }
        Ok(())
    }
}

/// Feedback switching rule extracted from a value field.
#[pyclass(frozen, module = "switchgrid")]
pub struct Policy {
    inner: switchgrid::SwitchingPolicy,
}

#[pymethods]
impl Policy {
    /// Target regime at the entry, or `None` to keep the current one.
    fn action(&self, level: usize, node: usize, regime: usize) -> PyResult<Option<usize>> {
        if level >= self.inner.levels() || node >= self.inner.grid().node_count() || regime >= self.inner.regimes() {
            return Err(SwitchgridError::new_err(format!("entry ({level}, {node}, {regime}) out of range")));
        }
        Ok(match self.inner.action(level, node, regime) {
            Action::Keep => None,
            Action::SwitchTo(j) => Some(j),
        })
    }

    #[getter]
    fn switch_count(&self) -> usize {
        self.inner.switch_count()
    }
}

fn scheme_params(obstacle_tol: Option<f64>, max_sweeps: Option<usize>) -> SchemeParams {
    let defaults = SchemeParams::default();
    SchemeParams { obstacle_tol: obstacle_tol.unwrap_or(defaults.obstacle_tol), max_sweeps }
}

/// Solves the penalized problem at level `n` on `grid`.
#[pyfunction]
#[pyo3(signature = (model, grid, n, obstacle_tol = None, max_sweeps = None))]
fn solve(
    py: Python<'_>,
    model: &Model,
    grid: &Grid,
    n: u32,
    obstacle_tol: Option<f64>,
    max_sweeps: Option<usize>,
) -> PyResult<ValueField> {
    let n = penalty(n)?;
    let params = scheme_params(obstacle_tol, max_sweeps);
    let grid = Arc::clone(&grid.inner);
    let field = py.detach(|| switchgrid::solve(&model.spec, n, grid, params)).map_err(err)?;
    Ok(ValueField { inner: field })
}

/// Switches wherever the value is within `eps` of the switching envelope.
#[pyfunction]
#[pyo3(signature = (field, model, eps = 1e-12))]
fn extract_policy(field: &ValueField, model: &Model, eps: f64) -> Policy {
    Policy { inner: switchgrid::extract_policy(&field.inner, &model.spec, eps) }
}

fn estimate_dict<'py>(py: Python<'py>, est: &PayoffEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", est.mean)?;
    d.set_item("std_error", est.std_error)?;
    d.set_item("paths", est.paths)?;
    d.set_item("escaped", est.escaped)?;
    Ok(d)
}

/// Monte Carlo payoff of `policy` from `(t0, x0, regime)`.
#[pyfunction]
#[pyo3(signature = (model, policy, t0, x0, regime, paths, seed, dt_sim = None))]
#[allow(clippy::too_many_arguments)]
fn estimate_payoff<'py>(
    py: Python<'py>,
    model: &Model,
    policy: &Policy,
    t0: f64,
    x0: Vec<f64>,
    regime: usize,
    paths: usize,
    seed: u64,
    dt_sim: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let dt_sim = dt_sim.unwrap_or_else(|| switchgrid::simulate::default_dt_sim(&policy.inner));
    let est = py
        .detach(|| switchgrid::estimate_payoff(&model.spec, &policy.inner, t0, &x0, regime, paths, dt_sim, seed))
        .map_err(err)?;
    estimate_dict(py, &est)
}

/// Solves along `ladder` and reports the monotone convergence table.
#[pyfunction]
#[pyo3(signature = (model, grid, ladder, obstacle_tol = None))]
fn converge<'py>(
    py: Python<'py>,
    model: &Model,
    grid: &Grid,
    ladder: Vec<u32>,
    obstacle_tol: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let levels = ladder.into_iter().map(penalty).collect::<PyResult<Vec<_>>>()?;
    let params = scheme_params(obstacle_tol, None);
    let oracle = model.oracle();
    let grid = Arc::clone(&grid.inner);
    let ladder = py
        .detach(|| harness::penalty_ladder(&model.spec, grid, &levels, params, oracle.as_ref().map(|o| o as &dyn Oracle)))
        .map_err(err)?;
    if let Some(e) = ladder.failure {
        return Err(err(e));
    }
    to_py(py, &ladder.report)
}

/// Runs the invariant suite at level `n`; the ladder defaults to `[n]`.
#[pyfunction]
#[pyo3(signature = (model, grid, n, ladder = None, seed = 0, samples = 200))]
fn verify<'py>(
    py: Python<'py>,
    model: &Model,
    grid: &Grid,
    n: u32,
    ladder: Option<Vec<u32>>,
    seed: u64,
    samples: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut opts = VerifyOptions::new(penalty(n)?);
    if let Some(l) = ladder {
        opts.ladder = l.into_iter().map(penalty).collect::<PyResult<Vec<_>>>()?;
    }
    opts.seed = seed;
    opts.dpp_samples = samples;
    let oracle = model.oracle();
    let grid = Arc::clone(&grid.inner);
    let report = py
        .detach(|| harness::verify(&model.spec, grid, &opts, oracle.as_ref().map(|o| o as &dyn Oracle)))
        .map_err(err)?;
    let out = to_py(py, &report)?;
    out.set_item("passed", report.passed())?;
    Ok(out)
}

/// Closed-form value of the counterexample model; `-inf` off the domain.
#[pyfunction]
#[pyo3(signature = (t, x, regime, horizon = 1.0, cost = 0.5))]
fn counterexample_value(t: f64, x: Vec<f64>, regime: usize, horizon: f64, cost: f64) -> PyResult<f64> {
    if x.len() != 2 || regime > 1 {
        return Err(SwitchgridError::new_err("the counterexample has two coordinates and regimes 0 and 1"));
    }
    Ok(match switchgrid::counterexample_value(t, &x, regime, horizon, cost) {
        ExtValue::Finite(v) => v,
        ExtValue::NegInf => f64::NEG_INFINITY,
    })
}

#[pymodule(name = "switchgrid")]
pub fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SwitchgridError", m.py().get_type::<SwitchgridError>())?;
    m.add_class::<Model>()?;
    m.add_class::<Grid>()?;
    m.add_class::<ValueField>()?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(extract_policy, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_payoff, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_value, m)?)?;
    Ok(())
}
