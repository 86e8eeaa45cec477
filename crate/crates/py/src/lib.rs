//! Python bindings: a thin layer over the scenario, solver and certificate APIs.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wplab::config::parse_config;
use wplab::variation::{covering_certificate, energy_curve, Scenario};
use wplab::wolf::WolfMetricFamily;
use wplab::LabError;

fn to_py(e: LabError) -> PyErr {
    match e {
        LabError::Config { .. } | LabError::Parse { .. } | LabError::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// (discrete area, 4π(g−1)) of the triangulated fundamental domain.
pub fn area(genus: usize, refine: usize) -> Result<(f64, f64), LabError> {
    let sc = Scenario::covering(genus, 1, refine)?;
    Ok((sc.domain.hyperbolic_area(), sc.area()))
}

/// Energy, target area and degree of the harmonic covering map.
pub fn covering_energy(genus: usize, cover_degree: usize, refine: usize) -> Result<(f64, f64, i64), LabError> {
    let sc = Scenario::covering(genus, cover_degree, refine)?;
    let (map, rep) = sc.solve(Default::default())?;
    let deg = wplab::harmonic::degree(&map, &sc.domain)?;
    Ok((rep.energy, sc.area(), deg.degree))
}

/// (t, E(t)) samples along the ray for differential `q_seed` of the configuration.
pub fn curve(config: &str) -> Result<Vec<(f64, f64)>, LabError> {
    let cfg = parse_config(config)?;
    let sc = Scenario::covering(cfg.genus, cfg.cover_degree, cfg.refine)?;
    let (map, _) = sc.solve(cfg.solver())?;
    let fam = WolfMetricFamily::build(&sc.domain, sc.beltrami(cfg.q_seed, cfg.q_truncation)?, cfg.t_max)?;
    let c = energy_curve(&map, &sc.domain, &fam, cfg.grid_points, cfg.solver())?;
    Ok(c.samples.iter().map(|s| (s.t, s.energy)).collect())
}

/// (passed, certificate text) for the covering scenario of the configuration.
pub fn certificate(config: &str) -> Result<(bool, String), LabError> {
    let cfg = parse_config(config)?;
    let mus = [cfg.q_seed, cfg.q_seed + 1, cfg.q_seed + 2];
    let (rep, _) = covering_certificate(cfg.genus, cfg.cover_degree, cfg.refine, &mus, 1.0, &cfg.certify_options())?;
    Ok((rep.passed(), rep.to_text()))
}

#[pyfunction]
#[pyo3(name = "area")]
fn py_area(py: Python<'_>, genus: usize, refine: usize) -> PyResult<(f64, f64)> {
    py.detach(|| area(genus, refine)).map_err(to_py)
}

#[pyfunction]
#[pyo3(name = "covering_energy")]
fn py_covering_energy(py: Python<'_>, genus: usize, cover_degree: usize, refine: usize) -> PyResult<(f64, f64, i64)> {
    py.detach(|| covering_energy(genus, cover_degree, refine)).map_err(to_py)
}

#[pyfunction]
#[pyo3(name = "curve", signature = (config = ""))]
fn py_curve(py: Python<'_>, config: &str) -> PyResult<Vec<(f64, f64)>> {
    let config = config.to_owned();
    py.detach(move || curve(&config)).map_err(to_py)
}

#[pyfunction]
#[pyo3(name = "certificate", signature = (config = ""))]
fn py_certificate(py: Python<'_>, config: &str) -> PyResult<(bool, String)> {
    let config = config.to_owned();
    py.detach(move || certificate(&config)).map_err(to_py)
}

#[pymodule]
fn pywplab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(py_area, m)?)?;
    m.add_function(wrap_pyfunction!(py_covering_energy, m)?)?;
    m.add_function(wrap_pyfunction!(py_curve, m)?)?;
    m.add_function(wrap_pyfunction!(py_certificate, m)?)?;
    Ok(())
}
