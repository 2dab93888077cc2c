//! Python bindings: config validation, single runs, campaigns and the
//! Yosida machinery.

use std::path::PathBuf;

use chb_core::config::RunConfig;
use chb_core::diagnostics::DiagnosticsRecord;
use chb_core::experiments::{self, Check};
use chb_core::potentials::{MonotoneGraph, YosidaGraph};
use chb_core::ChbError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: ChbError) -> PyErr {
    match e {
        ChbError::Solver { .. } | ChbError::NonFinite(_) | ChbError::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn load(text: &str, seed: Option<u64>) -> PyResult<RunConfig> {
    let cfg = RunConfig::parse(text, None).map_err(to_py)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn graph(kind: &str, param: f64) -> PyResult<MonotoneGraph> {
    Ok(match kind {
        "linear" => MonotoneGraph::Linear { slope: param },
        "cubic" | "polynomial" => MonotoneGraph::Cubic { alpha: param },
        "logarithmic" | "log" => MonotoneGraph::LogDerivative { theta: param },
        "obstacle" => MonotoneGraph::Obstacle,
        other => return Err(PyValueError::new_err(format!("unknown graph kind {other:?}"))),
    })
}

fn checks_dict<'py>(py: Python<'py>, checks: &[Check]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for c in checks {
        d.set_item(&c.name, (c.pass, &c.detail))?;
    }
    Ok(d)
}

/// Parses and validates a config; returns its SHA-256.
#[pyfunction]
fn validate(text: &str) -> PyResult<String> {
    Ok(load(text, None)?.hash)
}

/// Runs one simulation and returns the time series as `{column: [values]}`.
#[pyfunction]
#[pyo3(signature = (text, seed=None, out=None))]
fn run<'py>(py: Python<'py>, text: &str, seed: Option<u64>, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(text, seed)?;
    let o = py
        .detach(|| experiments::execute(&cfg.spec, out.as_deref()))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    for (j, name) in DiagnosticsRecord::COLUMNS.iter().enumerate() {
        let col: Vec<f64> = o.records.iter().map(|r| r.values()[j]).collect();
        d.set_item(*name, col)?;
    }
    d.set_item("state_hash", o.final_state.hash())?;
    Ok(d)
}

/// Runs the K sweep from the config; returns `(rows, slope, checks)`.
#[pyfunction]
#[pyo3(signature = (text, seed=None))]
fn sweep_k<'py>(py: Python<'py>, text: &str, seed: Option<u64>) -> PyResult<(Vec<(f64, Vec<f64>)>, Option<f64>, Bound<'py, PyDict>)> {
    let cfg = load(text, seed)?;
    let c = &cfg.campaigns;
    let res = py
        .detach(|| experiments::sweep_k(&cfg.spec, &c.sweep_k, c.include_zero, None))
        .map_err(to_py)?;
    let rows = res.rows.iter().map(|r| (r.param, r.values.clone())).collect();
    Ok((rows, res.fit.map(|f| f.slope), checks_dict(py, &res.checks)?))
}

/// Manufactured-solution battery; returns `(problem, n, error, order)` rows and checks.
#[pyfunction]
#[pyo3(signature = (levels=vec![4, 8, 16, 32]))]
fn mms<'py>(py: Python<'py>, levels: Vec<usize>) -> PyResult<(Vec<(String, usize, f64, f64)>, Bound<'py, PyDict>)> {
    let rep = py.detach(|| experiments::mms_battery(&levels)).map_err(to_py)?;
    let rows = rep.entries.iter().map(|e| (e.problem.clone(), e.n, e.error, e.order)).collect();
    Ok((rows, checks_dict(py, &rep.checks)?))
}

/// `(resolvent, yosida, moreau_envelope)` of a graph at `r`.
#[pyfunction]
#[pyo3(signature = (kind, eps, r, param=1.0))]
fn yosida(kind: &str, eps: f64, r: f64, param: f64) -> PyResult<(f64, f64, f64)> {
    let y = YosidaGraph::new(graph(kind, param)?, eps).map_err(to_py)?;
    Ok((
        y.resolvent(r).map_err(to_py)?,
        y.yosida(r).map_err(to_py)?,
        y.moreau_envelope(r).map_err(to_py)?,
    ))
}

#[pymodule]
fn chb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_k, m)?)?;
    m.add_function(wrap_pyfunction!(mms, m)?)?;
    m.add_function(wrap_pyfunction!(yosida, m)?)?;
    Ok(())
}
