use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gradflow::analytic::BarenblattProfile;
use gradflow::config::{RunConfig, PRESETS};
use gradflow::driver;
use gradflow::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A preset name, a path, or (with `text=True`) the config itself.
fn config(source: &str, text: bool) -> PyResult<RunConfig> {
    if text {
        RunConfig::parse(source)
    } else {
        RunConfig::load(Path::new(source))
    }
    .map_err(to_py)
}

/// Names of the shipped scenarios.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Integrates a scenario and runs its checks.
///
/// Returns a dict with `pass`, `checks` (name -> (pass, value, tolerance)),
/// `notes`, and the stored `times`, `mass` and `energy`. Artifacts are
/// written only when `out` is given.
#[pyfunction]
#[pyo3(signature = (source, text = false, out = None))]
fn run<'py>(py: Python<'py>, source: &str, text: bool, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(source, text)?;
    let art = py.detach(|| driver::run(&cfg)).map_err(to_py)?;
    if let Some(dir) = out {
        driver::write_run(&dir, &art).map_err(to_py)?;
    }
    let checks = PyDict::new(py);
    for c in &art.report.checks {
        checks.set_item(&c.name, (c.pass, c.value, c.tolerance))?;
    }
    let d = PyDict::new(py);
    d.set_item("name", &art.config.name)?;
    d.set_item("pass", art.report.pass())?;
    d.set_item("checks", checks)?;
    d.set_item("notes", art.report.notes.clone())?;
    d.set_item("times", art.trajectory.times.clone())?;
    d.set_item(
        "mass",
        art.trajectory.states.iter().map(|s| s.mass()).collect::<Vec<_>>(),
    )?;
    d.set_item("energy", art.report.energy.iter().map(|e| e.1).collect::<Vec<_>>())?;
    d.set_item("steps", art.trajectory.steps())?;
    Ok(d)
}

/// Structural report for the configured model: `(pass, lines)`.
#[pyfunction]
#[pyo3(signature = (source, text = false))]
fn validate(source: &str, text: bool) -> PyResult<(bool, Vec<String>)> {
    let rep = driver::validate(&config(source, text)?).map_err(to_py)?;
    Ok((rep.pass, rep.lines))
}

/// The energy density of the configured model at each `r`.
#[pyfunction]
#[pyo3(signature = (source, r, text = false))]
fn eta(source: &str, r: Vec<f64>, text: bool) -> PyResult<Vec<f64>> {
    let fnl = config(source, text)?.functional().map_err(to_py)?;
    r.iter().map(|&v| fnl.eta(v).map_err(to_py)).collect()
}

/// Barenblatt profile of exponent `m` at time `t`, at points `x` (1D) or
/// `(x, y)` pairs (2D).
#[pyfunction]
#[pyo3(signature = (m, t, x, dim = 1))]
fn barenblatt(m: f64, t: f64, x: Vec<Vec<f64>>, dim: usize) -> PyResult<Vec<f64>> {
    let profile = BarenblattProfile::new(m, dim).map_err(to_py)?;
    x.iter()
        .map(|p| match p.as_slice() {
            [a] if dim == 1 => Ok(profile.value(t, [*a, 0.0])),
            [a, b] if dim == 2 => Ok(profile.value(t, [*a, *b])),
            _ => Err(PyValueError::new_err(format!("expected points with {dim} coordinates"))),
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "gradflow")]
fn gradflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(eta, m)?)?;
    m.add_function(wrap_pyfunction!(barenblatt, m)?)?;
    Ok(())
}
