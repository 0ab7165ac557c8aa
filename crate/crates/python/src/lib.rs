//! Python bindings. Results come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fdris_core::array::fourier_coefficient;
use fdris_core::export::SolutionReport;
use fdris_core::pattern::{compute_pattern, PatternSpec};
use fdris_core::scenario::{load_scenario as load, Scenario, PAPER_PRESET};
use fdris_core::solve::{solve_kind, BaselineKind};
use fdris_core::sweep::evaluation_scene;
use fdris_core::{Error, Scene};

fn py_err(e: Error) -> PyErr {
    match &e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_validation() => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Round-trips through JSON so nested structs become dicts.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn scenario(path: Option<PathBuf>, preset: &str, seed: Option<u64>) -> Result<Scenario, Error> {
    let mut s = match path {
        Some(p) => load(&p)?,
        None => Scenario::preset(preset)?,
    };
    if let Some(seed) = seed {
        s.system.seed = seed;
    }
    Ok(s)
}

fn scheme(name: &str) -> PyResult<BaselineKind> {
    BaselineKind::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown scheme {name:?} (use fdris, ris or zf)")))
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Resolved scenario as a dict (SI values echoed back in file units).
#[pyfunction]
#[pyo3(signature = (path=None, preset=PAPER_PRESET, seed=None))]
fn load_scenario<'py>(py: Python<'py>, path: Option<PathBuf>, preset: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let s = scenario(path, preset, seed).map_err(py_err)?;
    py.import("json")?.call_method1("loads", (s.to_json(),))
}

/// Fourier coefficient `(re, im)` of the ramp reflection with `P T = 2 pi g`.
#[pyfunction]
#[pyo3(signature = (z, harmonic=1, amplitude=1.0, phase=0.0))]
fn harmonic_coefficient(z: i32, harmonic: i32, amplitude: f64, phase: f64) -> (f64, f64) {
    let c = fourier_coefficient(2.0 * std::f64::consts::PI * f64::from(harmonic), 1.0, z, amplitude, phase);
    (c.re, c.im)
}

/// Solves one scheme; returns the solution report plus the rate trace.
#[pyfunction]
#[pyo3(signature = (path=None, preset=PAPER_PRESET, scheme="fdris", seed=None, replicate=0, max_iterations=None))]
fn solve<'py>(
    py: Python<'py>,
    path: Option<PathBuf>,
    preset: &str,
    scheme: &str,
    seed: Option<u64>,
    replicate: u64,
    max_iterations: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = self::scheme(scheme)?;
    let mut s = scenario(path, preset, seed).map_err(py_err)?;
    if let Some(m) = max_iterations {
        s.solver.max_iterations = m.max(1);
    }
    let (report, trace) = py
        .detach(|| -> Result<_, Error> {
            let scene = Scene::realize(s.system.clone(), replicate)?;
            let (state, trace) = solve_kind(&scene, kind, &s.solver)?;
            let eval = evaluation_scene(&scene, kind);
            Ok((SolutionReport::new(&eval, &state, &trace, kind, replicate), trace))
        })
        .map_err(py_err)?;
    let out = to_py(py, &report)?;
    out.set_item("trace_wsr", trace.wsr())?;
    Ok(out)
}

/// Received-energy map over distances x elevations (degrees) at one azimuth.
#[pyfunction]
#[pyo3(signature = (path=None, preset=PAPER_PRESET, scheme="fdris", seed=None, replicate=0,
                    distances=(20.0, 100.0, 200), elevations=(0.0, 180.0, 180), azimuth=90.0))]
#[allow(clippy::too_many_arguments)]
fn pattern<'py>(
    py: Python<'py>,
    path: Option<PathBuf>,
    preset: &str,
    scheme: &str,
    seed: Option<u64>,
    replicate: u64,
    distances: (f64, f64, usize),
    elevations: (f64, f64, usize),
    azimuth: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = self::scheme(scheme)?;
    let s = scenario(path, preset, seed).map_err(py_err)?;
    let spec = PatternSpec::uniform(
        distances.0, distances.1, distances.2, elevations.0, elevations.1, elevations.2, azimuth,
    );
    let (grid, wsr) = py
        .detach(|| -> Result<_, Error> {
            let scene = Scene::realize(s.system.clone(), replicate)?;
            let (state, _) = solve_kind(&scene, kind, &s.solver)?;
            let eval = evaluation_scene(&scene, kind);
            Ok((compute_pattern(&eval, &state, &spec)?, eval.weighted_sum_rate(&state)))
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("wsr", wsr)?;
    d.set_item("distances", &grid.spec.distances)?;
    d.set_item("elevations_deg", grid.spec.elevations.iter().map(|e| e.to_degrees()).collect::<Vec<_>>())?;
    d.set_item("energy", &grid.energy)?;
    d.set_item("normalized", &grid.normalized)?;
    let peaks: Vec<(f64, f64)> = grid
        .local_maxima()
        .into_iter()
        .map(|(i, j)| (grid.spec.distances[i], grid.spec.elevations[j].to_degrees()))
        .collect();
    d.set_item("local_maxima", peaks)?;
    Ok(d)
}

#[pymodule]
fn fdris(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(pattern, m)?)?;
    Ok(())
}
