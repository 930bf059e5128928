//! Python bindings for the softfoot simulator.
//!
//! Structured results (poses, trial results, reports) are returned as plain
//! Python dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use softfoot::bench::{self, BenchSetup, ExperimentalRecord, TrialConfig};
use softfoot::contact::{ObstacleRole, ObstacleSpec};
use softfoot::io::{self, mjcf, tables};
use softfoot::kinematics::{forward_kinematics, Configuration, FootKinematics};
use softfoot::model::{self, BandSpec};
use softfoot::solver::{self, Scene, SolverSettings};
use softfoot::tendon::{tendon_path_for, tendon_tension};
use softfoot::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn settings(timestep: Option<f64>, duration: Option<f64>) -> SolverSettings {
    let mut s = SolverSettings::default();
    if let Some(dt) = timestep {
        s.timestep = dt;
    }
    if let Some(d) = duration {
        s.duration = d;
    }
    s
}

/// A foot model. Build the reference foot with `FootModel.default()` or load
/// one from JSON.
#[pyclass(name = "FootModel", module = "softfoot_py")]
#[derive(Clone)]
struct PyFootModel {
    inner: model::FootModel,
}

#[pymethods]
impl PyFootModel {
    #[staticmethod]
    fn default() -> Self {
        Self {
            inner: softfoot::build_default_softfoot(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: model::FootModel::from_json(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_model(&path).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    /// Violated invariants as strings; empty when the model is valid.
    fn validate(&self) -> Vec<String> {
        model::validate_model(&self.inner).iter().map(ToString::to_string).collect()
    }

    #[getter]
    fn dof(&self) -> usize {
        self.inner.dof()
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    #[getter]
    fn sole_ids(&self) -> Vec<String> {
        self.inner.sole().iter().map(|m| m.id.clone()).collect()
    }

    #[getter]
    fn coupling_count(&self) -> usize {
        self.inner.couplings.len()
    }

    #[getter]
    fn tendon_rest_length(&self) -> f64 {
        self.inner.tendon.rest_length
    }

    #[getter]
    fn tendon_max_length(&self) -> f64 {
        self.inner.tendon.max_length
    }

    fn __repr__(&self) -> String {
        format!(
            "FootModel(sole={:?}, mass={} kg)",
            self.sole_ids(),
            self.inner.total_mass()
        )
    }
}

fn configuration(
    model: &model::FootModel,
    slider_z: f64,
    coupling_angles: Option<Vec<f64>>,
    arch_angle: f64,
    pitch0: f64,
) -> PyResult<Configuration> {
    let mut q = Configuration::flat(model, slider_z, pitch0);
    q.arch_angle = arch_angle;
    if let Some(a) = coupling_angles {
        if a.len() != q.coupling_angles.len() {
            return Err(PyValueError::new_err(format!(
                "expected {} coupling angles, got {}",
                q.coupling_angles.len(),
                a.len()
            )));
        }
        q.coupling_angles = a;
    }
    Ok(q)
}

/// Young's modulus (Pa) of a rubber of the given Shore A hardness.
#[pyfunction]
fn gent_modulus(shore_a: f64) -> PyResult<f64> {
    model::gent_modulus(shore_a).map_err(py_err)
}

/// Rotational stiffness (N·m/rad) equivalent to a set of elastic bands.
#[pyfunction]
#[pyo3(signature = (shore_a, cross_section, rest_length, moment_arm, count_per_coupling=2))]
fn band_joint_stiffness(
    shore_a: f64,
    cross_section: f64,
    rest_length: f64,
    moment_arm: f64,
    count_per_coupling: u32,
) -> PyResult<f64> {
    let band = BandSpec {
        shore_a,
        cross_section,
        rest_length,
        moment_arm,
        count_per_coupling,
    };
    model::band_to_joint_stiffness(&band).map_err(py_err)
}

/// World poses of every body.
#[pyfunction]
#[pyo3(signature = (model, slider_z, coupling_angles=None, arch_angle=0.0, pitch0=0.0))]
fn kinematics(
    py: Python<'_>,
    model: &PyFootModel,
    slider_z: f64,
    coupling_angles: Option<Vec<f64>>,
    arch_angle: f64,
    pitch0: f64,
) -> PyResult<PyObject> {
    let q = configuration(&model.inner, slider_z, coupling_angles, arch_angle, pitch0)?;
    let poses = forward_kinematics(&model.inner, &q);
    let closure = softfoot::kinematics::loop_closure_residual(&model.inner, &q);
    to_py(py, &serde_json::json!({ "poses": poses, "closure_residual": closure }))
}

/// Routed tendon: length, tension and per-coupling moment arms.
#[pyfunction]
#[pyo3(signature = (model, coupling_angles=None, arch_angle=0.0))]
fn tendon(py: Python<'_>, model: &PyFootModel, coupling_angles: Option<Vec<f64>>, arch_angle: f64) -> PyResult<PyObject> {
    let q = configuration(&model.inner, 0.05, coupling_angles, arch_angle, 0.0)?;
    let path = tendon_path_for(&model.inner, &FootKinematics::new(&model.inner, &q)).map_err(py_err)?;
    let tension = tendon_tension(&path, &model.inner.tendon);
    to_py(
        py,
        &serde_json::json!({
            "length": path.total_length,
            "tension": tension,
            "moment_arms": path.moment_arms,
            "elements": path.elements,
        }),
    )
}

fn role(name: &str) -> PyResult<ObstacleRole> {
    match name {
        "heel" => Ok(ObstacleRole::Heel),
        "moving" => Ok(ObstacleRole::Moving),
        "metatarsus" => Ok(ObstacleRole::Metatarsus),
        "ground" => Ok(ObstacleRole::Ground),
        other => Err(PyValueError::new_err(format!("unknown obstacle role {other:?}"))),
    }
}

/// Settles the foot on obstacles given as `(role, center_x, height)`.
#[pyfunction]
#[pyo3(signature = (model, load, obstacles, pitch0=0.0, ground=true, timestep=None, duration=None))]
#[allow(clippy::too_many_arguments)]
fn settle(
    py: Python<'_>,
    model: &PyFootModel,
    load: f64,
    obstacles: Vec<(String, f64, f64)>,
    pitch0: f64,
    ground: bool,
    timestep: Option<f64>,
    duration: Option<f64>,
) -> PyResult<PyObject> {
    let mut obs = obstacles
        .iter()
        .map(|(r, x, h)| Ok(ObstacleSpec::new(role(r)?, *x, *h)))
        .collect::<PyResult<Vec<_>>>()?;
    if ground {
        obs.push(ObstacleSpec::ground());
    }
    let scene = Scene {
        obstacles: obs,
        load,
        pitch0,
    };
    let s = settings(timestep, duration);
    let settled = py
        .allow_threads(|| solver::settle(&model.inner, &scene, &s))
        .map_err(py_err)?;
    let contacts: Vec<_> = settled
        .contacts
        .iter()
        .map(|c| serde_json::json!({ "body": c.body, "role": c.role, "force": c.normal_force, "point": c.contact_point }))
        .collect();
    to_py(
        py,
        &serde_json::json!({
            "configuration": settled.state.q,
            "time": settled.state.time,
            "contacts": contacts,
            "total_contact_force": settled.total_contact_force(),
            "closure_residual": settled.closure_residual,
            "tendon_length": settled.tendon.total_length,
            "tension": settled.tension,
            "converged_early": settled.converged_early,
        }),
    )
}

/// The 48 bench trials as dicts.
#[pyfunction]
fn enumerate_trials(py: Python<'_>) -> PyResult<PyObject> {
    to_py(py, &bench::enumerate_trials())
}

/// Runs the bench and returns `(results, report)`. `experimental` is the
/// path of a measurement CSV.
#[pyfunction]
#[pyo3(signature = (model, workers=0, timestep=None, duration=None, experimental=None))]
fn run_bench(
    py: Python<'_>,
    model: &PyFootModel,
    workers: usize,
    timestep: Option<f64>,
    duration: Option<f64>,
    experimental: Option<PathBuf>,
) -> PyResult<(PyObject, PyObject)> {
    let exp: Option<Vec<ExperimentalRecord>> = experimental
        .map(|p| {
            let f = std::fs::File::open(&p).map_err(|e| py_err(e.into()))?;
            tables::read_experimental(f).map_err(py_err)
        })
        .transpose()?;
    let s = settings(timestep, duration);
    let results = py
        .allow_threads(|| bench::run_bench(&model.inner, &s, &BenchSetup::default(), workers))
        .map_err(py_err)?;
    let report = bench::summarize(&model.inner, &results, exp.as_deref());
    Ok((to_py(py, &results)?, to_py(py, &report)?))
}

/// Settles a single trial.
#[pyfunction]
#[pyo3(signature = (model, load, height_mm, position, timestep=None, duration=None))]
fn run_trial(
    py: Python<'_>,
    model: &PyFootModel,
    load: f64,
    height_mm: f64,
    position: usize,
    timestep: Option<f64>,
    duration: Option<f64>,
) -> PyResult<PyObject> {
    if !(1..=model::FASCIA_MODULES).contains(&position) {
        return Err(PyValueError::new_err(format!("position must be 1..=6, got {position}")));
    }
    let trial = TrialConfig {
        load,
        obstacle_height: height_mm * 1e-3,
        position,
        initial_inclination: 0.0,
        heel_dx: 0.0,
        meta_dx: 0.0,
    };
    let s = settings(timestep, duration);
    let r = py.allow_threads(|| bench::run_trial(&model.inner, &s, &BenchSetup::default(), &trial));
    to_py(py, &r)
}

#[pyfunction]
fn relative_error(f_sim: f64, f_exp: f64) -> Option<f64> {
    bench::relative_error(f_sim, f_exp)
}

#[pyfunction]
fn total_force_error(sim: [f64; 3], exp: [f64; 3]) -> Option<f64> {
    bench::total_force_error(&sim, &exp)
}

/// Per-module rotation errors after removing the mean offset, and the offset.
#[pyfunction]
fn rotation_errors(sim: Vec<f64>, exp: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    bench::rotation_errors(&sim, &exp).map_err(py_err)
}

#[pyfunction]
fn mean_std_filter(values: Vec<f64>) -> Vec<f64> {
    bench::mean_std_filter(&values)
}

/// MJCF scene for the model.
#[pyfunction]
fn export_mjcf(model: &PyFootModel) -> String {
    mjcf::export_mjcf(&model.inner)
}

/// Baseline rows of published mean relative errors (percent).
#[pyfunction]
fn baseline_rows(py: Python<'_>) -> PyResult<PyObject> {
    to_py(py, &bench::baseline_rows())
}

#[pymodule]
fn softfoot_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFootModel>()?;
    m.add_function(wrap_pyfunction!(gent_modulus, m)?)?;
    m.add_function(wrap_pyfunction!(band_joint_stiffness, m)?)?;
    m.add_function(wrap_pyfunction!(kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(tendon, m)?)?;
    m.add_function(wrap_pyfunction!(settle, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_trials, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(total_force_error, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_errors, m)?)?;
    m.add_function(wrap_pyfunction!(mean_std_filter, m)?)?;
    m.add_function(wrap_pyfunction!(export_mjcf, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_rows, m)?)?;
    m.add("__version__", io::TOOL_VERSION)?;
    Ok(())
}
