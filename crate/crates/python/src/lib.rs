//! Python bindings. Configuration goes in and comes out as JSON text.

use grainfield::mesh::{extract_boundaries, GrainMesh};
use grainfield::model::PriorConfig;
use grainfield::sampler::{run_chain, ChainConfig, Problem};
use grainfield::synth::{generate_geometry, simulate_data, SynthSpec};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;

fn err(e: grainfield::Error) -> PyErr {
    if e.is_numeric() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse<T: DeserializeOwned + Default>(json: Option<&str>, what: &str) -> PyResult<T> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("{what}: {e}"))),
    }
}

/// Default synth, chain and prior settings as a JSON object.
#[pyfunction]
fn defaults() -> String {
    serde_json::json!({
        "synth": SynthSpec::default(),
        "chain": ChainConfig::default(),
        "priors": PriorConfig::default(),
    })
    .to_string()
}

/// Generate a mesh and observations; returns `mesh` text, `y` and `truth` JSON.
#[pyfunction]
#[pyo3(signature = (seed, spec=None))]
fn simulate<'py>(py: Python<'py>, seed: u64, spec: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let spec = SynthSpec {
        seed,
        ..parse(spec, "spec")?
    };
    let mesh = generate_geometry(&spec).map_err(err)?;
    let sim = simulate_data(&mesh, &spec).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mesh", mesh.to_text())?;
    d.set_item("y", sim.y)?;
    d.set_item("truth", serde_json::to_string(&sim.truth).expect("state serializes"))?;
    Ok(d)
}

#[pyfunction]
fn mesh_summary<'py>(py: Python<'py>, mesh: &str) -> PyResult<Bound<'py, PyDict>> {
    let m = GrainMesh::parse(mesh).map_err(err)?;
    let bg = extract_boundaries(&m).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("nodes", m.n_nodes())?;
    d.set_item("elements", m.n_elements())?;
    d.set_item("grains", m.n_grains())?;
    d.set_item("dim_beta", bg.dim_beta())?;
    d.set_item("dim_gamma", bg.dim_gamma())?;
    Ok(d)
}

/// Run the sampler. Returns trace `columns` and `rows`, `fitted_mean` and
/// post-burn-in `acceptance` rates for β, γ and df.
#[pyfunction]
#[pyo3(signature = (mesh, y, seed, chain=None, priors=None))]
fn fit<'py>(
    py: Python<'py>,
    mesh: &str,
    y: Vec<f64>,
    seed: u64,
    chain: Option<&str>,
    priors: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = GrainMesh::parse(mesh).map_err(err)?;
    let chain = ChainConfig {
        seed,
        ..parse(chain, "chain")?
    };
    let priors: PriorConfig = parse(priors, "priors")?;
    chain.validate().map_err(err)?;
    priors.validate().map_err(err)?;
    let trace = py
        .detach(|| Problem::new(m, y, Default::default()).and_then(|p| run_chain(&p, &priors, &chain, None)))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("columns", trace.columns)?;
    d.set_item("rows", trace.rows)?;
    d.set_item("fitted_mean", trace.fitted_mean)?;
    d.set_item("acceptance", trace.acceptance_sample.rates().to_vec())?;
    Ok(d)
}

#[pymodule]
fn pygrainfield(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(defaults, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(mesh_summary, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    Ok(())
}
