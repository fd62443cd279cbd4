//! Python bindings for the reservoir simulator.
//!
//! Matrices cross the boundary as lists of row lists.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand_chacha::ChaCha8Rng;

use gqrc_core::analysis::experiment::{capacity_realization, run_task as core_run_task};
use gqrc_core::analysis::laws;
use gqrc_core::analysis::sim::{Engine, ModelSpec, SimMode, Stepper};
use gqrc_core::analysis::snr::{snr_curve as core_snr_curve, SnrAveraging, SnrSettings};
use gqrc_core::config::{RunConfig, Task};
use gqrc_core::gaussian::{self, SymplecticMatrix};
use gqrc_core::io::{write_manifest, write_tables, RunManifest};
use gqrc_core::linalg::Mat;
use gqrc_core::readout::IpcSettings;
use gqrc_core::reservoir::{self, EnsembleState, LoopModel as CoreModel};
use gqrc_core::seed::{self, Stream};
use gqrc_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |v| v.len());
    if rows.iter().any(|v| v.len() != c) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

fn parse_engine(s: &str) -> PyResult<Engine> {
    match s {
        "pulses" => Ok(Engine::Pulses),
        "gram" => Ok(Engine::Gram),
        _ => Err(PyValueError::new_err(format!("engine must be 'pulses' or 'gram', got '{s}'"))),
    }
}

fn parse_averaging(s: &str) -> PyResult<SnrAveraging> {
    match s {
        "arithmetic" => Ok(SnrAveraging::Arithmetic),
        "log_domain" => Ok(SnrAveraging::LogDomain),
        _ => Err(PyValueError::new_err(format!(
            "averaging must be 'arithmetic' or 'log_domain', got '{s}'"
        ))),
    }
}

/// A reservoir with both crystals drawn from `seed`.
#[pyclass(name = "LoopModel", module = "gqrc")]
struct PyLoopModel {
    spec: ModelSpec,
    seed: u64,
    inner: CoreModel,
}

#[pymethods]
impl PyLoopModel {
    #[new]
    #[pyo3(signature = (n_modes, reflectivity, seed=0, dt=1.0))]
    fn new(n_modes: usize, reflectivity: f64, seed: u64, dt: f64) -> PyResult<Self> {
        let mut spec = ModelSpec::new(n_modes, reflectivity);
        spec.dt = dt;
        let inner = spec.draw(seed).map_err(py_err)?;
        Ok(Self { spec, seed, inner })
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }

    #[getter]
    fn reflectivity(&self) -> f64 {
        self.inner.reflectivity()
    }

    fn s1(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.s1().matrix())
    }

    fn s2(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.s2().matrix())
    }

    fn s_prime(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.s_prime().matrix())
    }

    /// Spectral radius of sqrt(R) S1.
    fn echo_state_radius(&self) -> PyResult<f64> {
        reservoir::verify_echo_state(self.inner.params()).map_err(py_err)
    }

    fn ancilla(&self, s: f64) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.ancilla(s).map_err(py_err)?))
    }

    /// `length` inputs drawn from this model's seed.
    fn draw_inputs(&self, length: usize) -> Vec<f64> {
        self.spec.draw_inputs(self.seed, length)
    }

    fn __repr__(&self) -> String {
        format!(
            "LoopModel(n_modes={}, reflectivity={}, seed={})",
            self.inner.n_modes(),
            self.inner.reflectivity(),
            self.seed
        )
    }
}

/// Steps a model, either exactly (`m_pulses=None`) or with a finite ensemble.
#[pyclass(name = "Loop", module = "gqrc")]
struct PyLoop {
    model: CoreModel,
    stepper: Stepper,
}

#[pymethods]
impl PyLoop {
    #[new]
    #[pyo3(signature = (model, m_pulses=None, engine="pulses", seed=0))]
    fn new(model: &PyLoopModel, m_pulses: Option<usize>, engine: &str, seed: u64) -> PyResult<Self> {
        let mode = match m_pulses {
            None => SimMode::Ideal,
            Some(m) => SimMode::Ensemble {
                m_pulses: m,
                engine: parse_engine(engine)?,
            },
        };
        let n = model.inner.n_modes();
        let sigma0 = Mat::identity(2 * n, 2 * n);
        let stepper = Stepper::new(&model.inner, mode, &sigma0, seed).map_err(py_err)?;
        Ok(Self {
            model: model.inner.clone(),
            stepper,
        })
    }

    /// Injects `s` and returns the N x N x-quadrature output covariance.
    fn step(&mut self, s: f64) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.stepper.step(&self.model, s).map_err(py_err)?))
    }

    /// Runs all inputs and returns one upper-triangle feature row per step.
    fn run(&mut self, inputs: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        inputs
            .iter()
            .map(|&s| {
                let x = self.stepper.step(&self.model, s).map_err(py_err)?;
                Ok(reservoir::FeatureVector::from_x_block(&x).as_slice().to_vec())
            })
            .collect()
    }
}

/// Per-pulse outcomes of one round trip, for inspecting the raw ensemble.
#[pyclass(name = "PulseEnsemble", module = "gqrc")]
struct PyPulseEnsemble {
    model: CoreModel,
    state: EnsembleState,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyPulseEnsemble {
    #[new]
    #[pyo3(signature = (model, m_pulses, seed=0))]
    fn new(model: &PyLoopModel, m_pulses: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            model: model.inner.clone(),
            state: EnsembleState::vacuum(model.inner.n_modes(), m_pulses).map_err(py_err)?,
            rng: seed::rng(seed, Stream::Noise),
        })
    }

    /// Returns the M x N homodyne outcomes of one round trip.
    fn round_trip(&mut self, s: f64) -> PyResult<Vec<Vec<f64>>> {
        let batch = self.state.mc_round_trip(&self.model, s, &mut self.rng).map_err(py_err)?;
        Ok(to_rows(&batch.outcomes))
    }

    fn shared_cov(&self) -> Vec<Vec<f64>> {
        to_rows(self.state.shared_cov())
    }
}

#[pyfunction]
fn symplectic_from_hamiltonian(h: Vec<Vec<f64>>, dt: f64) -> PyResult<Vec<Vec<f64>>> {
    let s = gaussian::symplectic_from_hamiltonian(&from_rows(h)?, dt).map_err(py_err)?;
    Ok(to_rows(s.matrix()))
}

#[pyfunction]
fn beamsplitter(reflectivity: f64, n_modes: usize) -> PyResult<Vec<Vec<f64>>> {
    let b = gaussian::beamsplitter_symplectic(reflectivity, n_modes).map_err(py_err)?;
    Ok(to_rows(b.matrix()))
}

#[pyfunction]
fn max_squeezing_db(s: Vec<Vec<f64>>) -> PyResult<f64> {
    let s = SymplecticMatrix::new(from_rows(s)?).map_err(py_err)?;
    Ok(gaussian::max_squeezing_db(&s))
}

#[pyfunction]
fn washout_length(reflectivity: f64) -> PyResult<usize> {
    reservoir::washout_length(reflectivity).map_err(py_err)
}

#[pyfunction]
fn predicted_shift_m(m: f64, m_prime: f64) -> PyResult<f64> {
    laws::predicted_shift_m(m, m_prime).map_err(py_err)
}

#[pyfunction]
fn predicted_shift_r(r: f64, r_prime: f64) -> PyResult<f64> {
    laws::predicted_shift_r(r, r_prime).map_err(py_err)
}

#[pyfunction]
fn resolution_gain(m: f64, m_prime: f64, r: f64) -> PyResult<f64> {
    laws::resolution_gain(m, m_prime, r).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n_modes, c_const=10.0, m_coeff=3.0, m_exponent=6.0))]
fn scaling_schedule(n_modes: usize, c_const: f64, m_coeff: f64, m_exponent: f64) -> PyResult<(f64, usize)> {
    let sched = laws::ScalingSchedule {
        c_const,
        m_coeff,
        m_exponent,
        modes: vec![n_modes],
    };
    laws::scaling_schedule(&sched, n_modes).map_err(py_err)
}

/// Information processing capacity of one realization.
#[pyfunction]
#[pyo3(signature = (n_modes, reflectivity, seed=0, m_pulses=None, engine="pulses",
                    train_len=10_000, test_len=5_000, degree_max=5, delay_max=75))]
#[allow(clippy::too_many_arguments)]
fn capacity<'py>(
    py: Python<'py>,
    n_modes: usize,
    reflectivity: f64,
    seed: u64,
    m_pulses: Option<usize>,
    engine: &str,
    train_len: usize,
    test_len: usize,
    degree_max: usize,
    delay_max: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = ModelSpec::new(n_modes, reflectivity);
    let mode = match m_pulses {
        None => SimMode::Ideal,
        Some(m) => SimMode::Ensemble {
            m_pulses: m,
            engine: parse_engine(engine)?,
        },
    };
    let settings = IpcSettings {
        degree_max,
        delay_max,
        ..Default::default()
    };
    let rep = py
        .detach(|| capacity_realization(&spec, seed, mode, train_len, test_len, &settings))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("total_ipc", rep.total_ipc)?;
    d.set_item("normalized_ipc", rep.normalized_ipc)?;
    d.set_item("n_features", rep.n_features)?;
    d.set_item("linear_memory", rep.linear_memory())?;
    let per_degree: Vec<f64> = (1..=degree_max).map(|k| rep.degree_sum(k)).collect();
    d.set_item("degree_sums", per_degree)?;
    Ok(d)
}

/// SNR per delay over realizations derived from `master_seed`.
#[pyfunction]
#[pyo3(signature = (n_modes, reflectivity, m_pulses, realizations=20, master_seed=0,
                    engine="pulses", max_delay=20, window=100, averaging="arithmetic"))]
#[allow(clippy::too_many_arguments)]
fn snr_curve<'py>(
    py: Python<'py>,
    n_modes: usize,
    reflectivity: f64,
    m_pulses: usize,
    realizations: usize,
    master_seed: u64,
    engine: &str,
    max_delay: usize,
    window: usize,
    averaging: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let settings = SnrSettings {
        max_delay,
        window,
        averaging: parse_averaging(averaging)?,
        ..Default::default()
    };
    let engine = parse_engine(engine)?;
    let spec = ModelSpec::new(n_modes, reflectivity);
    let c = py
        .detach(|| core_snr_curve(&spec, master_seed, realizations, m_pulses, engine, &settings))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("delays", c.delays)?;
    d.set_item("snr_db", c.snr_db)?;
    d.set_item("stderr", c.stderr)?;
    d.set_item("slope", c.slope)?;
    d.set_item("height", c.height)?;
    d.set_item("realizations", c.n_realizations)?;
    Ok(d)
}

/// Runs a CLI task with the given overrides and writes its CSVs and manifest.
/// Returns 0, or 1 when a validation check failed.
#[pyfunction]
#[pyo3(signature = (task, output_dir, overrides=Vec::new(), config_text=String::new()))]
fn run_task(py: Python<'_>, task: &str, output_dir: &str, overrides: Vec<String>, config_text: String) -> PyResult<i32> {
    let task: Task = task.parse().map_err(py_err)?;
    let mut overrides = overrides;
    overrides.push(format!("run.task=\"{}\"", task.name()));
    let mut cfg = RunConfig::from_toml_str(&config_text, &overrides).map_err(py_err)?;
    cfg.run.output_dir = output_dir.into();
    py.detach(|| {
        let out = core_run_task(&cfg)?;
        let files = write_tables(&cfg.run.output_dir, &out.tables)?;
        let status = i32::from(out.checks_failed);
        let manifest = RunManifest {
            software: "gqrc-core".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            task: task.name().into(),
            master_seed: cfg.run.master_seed,
            config: cfg.to_toml_string(),
            realization_seeds: out.realization_seeds,
            files,
            timings: out.timings,
            failures: out.failures,
            exit_status: status,
        };
        write_manifest(&cfg.run.output_dir, task.name(), &manifest)?;
        Ok(status)
    })
    .map_err(py_err)
}

#[pymodule]
fn gqrc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLoopModel>()?;
    m.add_class::<PyLoop>()?;
    m.add_class::<PyPulseEnsemble>()?;
    m.add_function(wrap_pyfunction!(symplectic_from_hamiltonian, m)?)?;
    m.add_function(wrap_pyfunction!(beamsplitter, m)?)?;
    m.add_function(wrap_pyfunction!(max_squeezing_db, m)?)?;
    m.add_function(wrap_pyfunction!(washout_length, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_shift_m, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_shift_r, m)?)?;
    m.add_function(wrap_pyfunction!(resolution_gain, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(capacity, m)?)?;
    m.add_function(wrap_pyfunction!(snr_curve, m)?)?;
    m.add_function(wrap_pyfunction!(run_task, m)?)?;
    Ok(())
}
