//! Python bindings for the photon-exchange toolkit.

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use photon_exchange_core::cli;
use photon_exchange_core::dynamics::{self, CollectiveModel, Coupling, Model, PulseSchedule, PulseSegment};
use photon_exchange_core::estimates::{self, MediumParams};
use photon_exchange_core::gates::{self, LogicalEncoding};
use photon_exchange_core::perturbation::{self, CollisionModelParams, WidthRule, WidthSelector};
use photon_exchange_core::Error;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    if e.is_numerical() {
        PyArithmeticError::new_err(msg)
    } else if matches!(e, Error::Io(_)) {
        PyOSError::new_err(msg)
    } else {
        PyValueError::new_err(msg)
    }
}

fn collective(atoms: Option<u32>) -> CollectiveModel {
    match atoms {
        None => CollectiveModel::Bosonized,
        Some(atoms) => CollectiveModel::TavisCummings { atoms },
    }
}

fn selector(rule: &str) -> PyResult<WidthSelector> {
    match rule {
        "none" => Ok(WidthSelector::None),
        "excited-atom-states" => Ok(WidthSelector::ExcitedAtomStates),
        "exchanged-photon-ground-states" => Ok(WidthSelector::ExchangedPhotonGroundStates),
        other => Err(PyValueError::new_err(format!(
            "unknown width rule `{other}` (expected none, excited-atom-states or exchanged-photon-ground-states)"
        ))),
    }
}

/// A sequence of pulses, each coupling two modes for a given area in units of π.
#[pyclass(name = "Schedule", module = "photon_exchange", from_py_object)]
#[derive(Clone)]
struct PySchedule {
    inner: PulseSchedule,
}

#[pymethods]
impl PySchedule {
    /// `pulses` is a list of `(mode_a, mode_b, g, area)` tuples.
    #[new]
    fn new(pulses: Vec<(String, String, f64, f64)>) -> PyResult<Self> {
        let segments = pulses
            .into_iter()
            .map(|(a, b, g, area)| PulseSegment::with_area(Coupling::new(a, b, g), area))
            .collect::<photon_exchange_core::Result<Vec<_>>>()
            .map_err(py_err)?;
        Ok(Self {
            inner: PulseSchedule::new(segments).map_err(py_err)?,
        })
    }

    /// π on photon 1, 2π on photon 2, π on photon 1.
    #[staticmethod]
    fn three_pulse(g: f64) -> PyResult<Self> {
        Ok(Self {
            inner: PulseSchedule::three_pulse(g).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.segments().len()
    }
}

/// Logical gate of a schedule.
#[pyclass(name = "GateReport", module = "photon_exchange", frozen)]
struct PyGateReport {
    inner: gates::GateReport,
}

#[pymethods]
impl PyGateReport {
    /// Row-major 4×4 matrix, `matrix[out][in]`.
    #[getter]
    fn matrix(&self) -> Vec<Vec<Complex64>> {
        (0..4)
            .map(|r| (0..4).map(|c| self.inner.matrix[(r, c)]).collect())
            .collect()
    }

    #[getter]
    fn leakage(&self) -> [f64; 4] {
        self.inner.leakage
    }

    #[getter]
    fn unitarity_defect(&self) -> f64 {
        self.inner.unitarity_defect
    }

    #[getter]
    fn entangling(&self) -> bool {
        self.inner.entangling
    }

    #[getter]
    fn conditional_phase(&self) -> Option<f64> {
        gates::conditional_phase(&self.inner.matrix, gates::ENTANGLING_TOL)
    }

    #[pyo3(signature = (target = [1.0, -1.0, 1.0, -1.0]))]
    fn deviation(&self, target: [f64; 4]) -> f64 {
        self.inner.deviation_from_diagonal(target.map(|x| Complex64::new(x, 0.0)))
    }

    fn __repr__(&self) -> String {
        format!(
            "GateReport(entangling={}, max_leakage={:.3e}, unitarity_defect={:.3e})",
            self.inner.entangling,
            self.inner.max_leakage(),
            self.inner.unitarity_defect
        )
    }
}

/// Gate acting on the standard encoding (qubits in photon1/photon2).
/// `atoms=None` uses the bosonized collective mode.
#[pyfunction]
#[pyo3(signature = (schedule, atoms = None))]
fn extract_gate(py: Python<'_>, schedule: &PySchedule, atoms: Option<u32>) -> PyResult<PyGateReport> {
    let model = Model::two_photon(collective(atoms));
    let inner = py
        .detach(|| gates::extract_gate(&schedule.inner, &LogicalEncoding::standard(), &model))
        .map_err(py_err)?;
    Ok(PyGateReport { inner })
}

#[pyfunction]
#[pyo3(signature = (initial, mode_a, mode_b, g = 1.0, atoms = None))]
fn rabi_frequency(initial: Vec<u32>, mode_a: String, mode_b: String, g: f64, atoms: Option<u32>) -> PyResult<f64> {
    let model = Model::two_photon(collective(atoms));
    dynamics::rabi_frequency(&model, &Coupling::new(mode_a, mode_b, g), &initial).map_err(py_err)
}

/// `(τ, P)` pairs for photon survival after residence time τ.
#[pyfunction]
fn transmission_scan(g: f64, durations: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    dynamics::transmission_scan(g, &durations).map_err(py_err)
}

/// `(phase, loss)` of a detuned, broadened single-excitation pass.
#[pyfunction]
fn phase_vs_loss(g: f64, detuning: f64, width: f64, t: f64) -> PyResult<(f64, f64)> {
    dynamics::phase_vs_loss(g, detuning, width, t).map_err(py_err)
}

/// Populations after the mixing pulses: keys `p_two_photon`,
/// `p_two_excitation`, `p_return`.
#[pyfunction]
#[pyo3(signature = (theta, atoms = None))]
fn five_pulse_leakage<'py>(py: Python<'py>, theta: f64, atoms: Option<u32>) -> PyResult<Bound<'py, PyDict>> {
    let r = gates::five_pulse_leakage(collective(atoms), theta).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("p_two_photon", r.p_two_photon)?;
    d.set_item("p_two_excitation", r.p_two_excitation)?;
    d.set_item("p_return", r.p_return)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (atoms = None))]
fn emission_absorption_ratio(atoms: Option<u32>) -> PyResult<f64> {
    gates::emission_absorption_ratio(collective(atoms)).map_err(py_err)
}

#[allow(clippy::too_many_arguments)]
fn collision_params(
    atoms: u32,
    delta1: f64,
    delta2: f64,
    w: f64,
    m: f64,
    f_r: f64,
    delta: Option<f64>,
) -> PyResult<CollisionModelParams> {
    let mut p = CollisionModelParams::new(atoms, delta1, delta2);
    p.w = w;
    p.m = m;
    p.f_r = f_r;
    if let Some(d) = delta {
        p.delta = d;
    }
    p.validate().map_err(py_err)?;
    Ok(p)
}

/// Fourth-order `n1·n2` coefficient of the two-atom energy terms.
#[pyfunction]
#[pyo3(signature = (atoms, delta1, delta2, w = 0.0, rule = "exchanged-photon-ground-states", m = 1.0, f_r = 1.0, delta = None))]
#[allow(clippy::too_many_arguments)]
fn cross_coefficient(
    py: Python<'_>,
    atoms: u32,
    delta1: f64,
    delta2: f64,
    w: f64,
    rule: &str,
    m: f64,
    f_r: f64,
    delta: Option<f64>,
) -> PyResult<Complex64> {
    let p = collision_params(atoms, delta1, delta2, w, m, f_r, delta)?;
    let rule = WidthRule::new(selector(rule)?, w).map_err(py_err)?;
    py.detach(|| perturbation::cross_coefficient(&p, rule))
        .map(|c| c.value)
        .map_err(py_err)
}

/// Closed-form `(ΔE, ΔE′)` estimates of the same coefficient.
#[pyfunction]
#[pyo3(signature = (atoms, delta1, delta2, w = 0.0, m = 1.0, f_r = 1.0, delta = None))]
fn franson_formula(
    atoms: u32,
    delta1: f64,
    delta2: f64,
    w: f64,
    m: f64,
    f_r: f64,
    delta: Option<f64>,
) -> PyResult<(Complex64, Complex64)> {
    let p = collision_params(atoms, delta1, delta2, w, m, f_r, delta)?;
    perturbation::franson_formula(&p).map_err(py_err)
}

/// Cooperative Raman rate in s⁻¹ (SI inputs).
#[pyfunction]
fn cooperative_raman_rate(density: f64, omega: f64, dipole: f64, detuning: f64, rabi: f64) -> PyResult<f64> {
    let p = MediumParams {
        density,
        omega,
        dipole,
        detuning,
        rabi,
        // not used by the rate; any positive value passes validation
        linewidth: 1.0,
        wavenumber: 1.0,
        t2: 1.0,
    };
    estimates::cooperative_raman_rate(&p).map_err(py_err)
}

#[pyfunction]
fn dipole_dipole_rate(linewidth: f64, wavenumber: f64, distance: f64) -> PyResult<f64> {
    estimates::dipole_dipole_rate(linewidth, wavenumber, distance).map_err(py_err)
}

/// Density regime and dominant decoherence channel.
#[pyfunction]
fn regime_classify<'py>(
    py: Python<'py>,
    density: f64,
    wavenumber: f64,
    linewidth: f64,
    t2: f64,
    coop_rate: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = estimates::regime_classify(density, wavenumber, linewidth, t2, coop_rate).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item(
        "regime",
        match r.regime {
            estimates::DensityRegime::HighDensity => "high-density",
            estimates::DensityRegime::LowDensity => "low-density",
        },
    )?;
    d.set_item("density_parameter", r.density_parameter)?;
    d.set_item("dipole_rate", r.dipole_rate)?;
    d.set_item("dephasing_rate", r.dephasing_rate)?;
    d.set_item(
        "dominant",
        match r.dominant {
            estimates::DecoherenceChannel::DipoleDipole => "dipole-dipole",
            estimates::DecoherenceChannel::Dephasing => "dephasing",
        },
    )?;
    d.set_item("dominant_rate", r.dominant_rate)?;
    d.set_item("cooperation_wins", r.cooperation_wins)?;
    Ok(d)
}

/// Evaluates a scenario document and returns `{file name: contents}`
/// without writing anything. JSON contents are the bare payloads.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, toml_text: &str) -> PyResult<Bound<'py, PyDict>> {
    let scenario = cli::parse_scenario(toml_text).map_err(py_err)?;
    let artifacts = py.detach(|| cli::evaluate(&scenario)).map_err(py_err)?;
    let d = PyDict::new(py);
    for a in &artifacts.files {
        d.set_item(a.name(), a.payload_text().map_err(py_err)?)?;
    }
    Ok(d)
}

#[pymodule]
#[pyo3(name = "photon_exchange")]
fn photon_exchange_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PyGateReport>()?;
    m.add_function(wrap_pyfunction!(extract_gate, m)?)?;
    m.add_function(wrap_pyfunction!(rabi_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(transmission_scan, m)?)?;
    m.add_function(wrap_pyfunction!(phase_vs_loss, m)?)?;
    m.add_function(wrap_pyfunction!(five_pulse_leakage, m)?)?;
    m.add_function(wrap_pyfunction!(emission_absorption_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(cross_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(franson_formula, m)?)?;
    m.add_function(wrap_pyfunction!(cooperative_raman_rate, m)?)?;
    m.add_function(wrap_pyfunction!(dipole_dipole_rate, m)?)?;
    m.add_function(wrap_pyfunction!(regime_classify, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
