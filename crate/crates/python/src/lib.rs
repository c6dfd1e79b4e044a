//! Python bindings: point measures, patience laws, probe functions, the
//! simulator with its observables and martingales, fluid limits, the
//! transport check and the convergence experiments.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use edffluid::fluid::{self, DetEdf};
use edffluid::harness::{self, ExperimentSettings};
use edffluid::sim::{self, Compensator, MartingaleParams, Mode, SimConfig, Snapshot};
use edffluid::{transport, Error};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InvalidParameter(_) | Error::Config(_) | Error::OutOfRange { .. } | Error::Unbounded(_) => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

trait OrPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPy<T> for edffluid::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

#[pyclass(name = "PointMeasure", module = "edffluid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPointMeasure(edffluid::PointMeasure);

#[pymethods]
impl PyPointMeasure {
    /// Finite measure from `(location, weight)` pairs.
    #[new]
    #[pyo3(signature = (atoms=Vec::new()))]
    fn new(atoms: Vec<(f64, f64)>) -> PyResult<Self> {
        edffluid::PointMeasure::new(atoms).py_err().map(Self)
    }

    #[staticmethod]
    fn dirac(location: f64) -> Self {
        Self(edffluid::PointMeasure::dirac(location))
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        self.0.atoms().iter().map(|a| (a.location, a.weight)).collect()
    }

    fn total_mass(&self) -> f64 {
        self.0.total_mass()
    }

    fn mass_positive(&self) -> f64 {
        self.0.mass_positive()
    }

    fn mass_nonpositive(&self) -> f64 {
        self.0.mass_nonpositive()
    }

    fn first_positive_atom(&self) -> Option<f64> {
        self.0.first_positive_atom()
    }

    fn translate_left(&self, h: f64) -> PyResult<Self> {
        self.0.translate_left(h).py_err().map(Self)
    }

    fn renormalize(&self, n: u64) -> PyResult<Self> {
        self.0.renormalize(n).py_err().map(Self)
    }

    /// `Σ wᵢ f(xᵢ)` for a Python callable or a `TestFunction`.
    fn pair(&self, f: &Bound<'_, PyAny>) -> PyResult<f64> {
        if let Ok(phi) = f.cast::<PyTestFunction>() {
            return Ok(self.0.pair(&phi.get().0));
        }
        let mut total = 0.0;
        for a in self.0.atoms() {
            total += a.weight * f.call1((a.location,))?.extract::<f64>()?;
        }
        Ok(total)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("PointMeasure({:?})", self.atoms())
    }
}

#[pyclass(name = "Distribution", module = "edffluid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDistribution(edffluid::Distribution);

#[pymethods]
impl PyDistribution {
    #[staticmethod]
    fn deterministic(d: f64) -> PyResult<Self> {
        Self::checked(edffluid::Distribution::Deterministic { d })
    }

    #[staticmethod]
    fn exponential(rate: f64) -> PyResult<Self> {
        Self::checked(edffluid::Distribution::Exponential { rate })
    }

    #[staticmethod]
    fn uniform(a: f64, b: f64) -> PyResult<Self> {
        Self::checked(edffluid::Distribution::Uniform { a, b })
    }

    #[staticmethod]
    fn discrete(points: Vec<f64>, probs: Vec<f64>) -> PyResult<Self> {
        Self::checked(edffluid::Distribution::Discrete { points, probs })
    }

    /// Parses the tagged JSON form, e.g. `{"kind": "exponential", "rate": 1.0}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let d = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Self::checked(d)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("serializable")
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn survival(&self, t: f64) -> f64 {
        self.0.survival(t)
    }

    fn cdf(&self, t: f64) -> f64 {
        self.0.cdf(t)
    }

    /// `E[φ(X)]` for a bounded probe.
    fn expect(&self, phi: &PyTestFunction) -> PyResult<f64> {
        edffluid::calculus::expect(&self.0, &phi.0, &edffluid::QuadratureSpec::default()).py_err()
    }

    fn __repr__(&self) -> String {
        format!("Distribution.from_json('{}')", self.to_json())
    }
}

impl PyDistribution {
    fn checked(d: edffluid::Distribution) -> PyResult<Self> {
        d.validate().py_err()?;
        Ok(Self(d))
    }
}

#[pyclass(name = "TestFunction", module = "edffluid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTestFunction(edffluid::TestFunction);

#[pymethods]
impl PyTestFunction {
    #[staticmethod]
    fn constant(c: f64) -> Self {
        Self(edffluid::TestFunction::constant(c))
    }

    #[staticmethod]
    fn capped_identity(cap: f64) -> Self {
        Self(edffluid::TestFunction::capped_identity(cap))
    }

    #[staticmethod]
    fn gaussian(center: f64, width: f64) -> Self {
        Self(edffluid::TestFunction::gaussian(center, width))
    }

    #[staticmethod]
    fn sigmoid(center: f64, scale: f64) -> Self {
        Self(edffluid::TestFunction::sigmoid(center, scale))
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    fn __call__(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    fn deriv(&self, x: f64) -> f64 {
        self.0.deriv(x)
    }

    fn __repr__(&self) -> String {
        format!("TestFunction({})", self.0.name())
    }
}

/// The probe functions used by the checks and experiments.
#[pyfunction]
fn standard_test_suite() -> Vec<PyTestFunction> {
    edffluid::calculus::standard_test_suite().into_iter().map(PyTestFunction).collect()
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "edf" => Ok(Mode::Edf),
        "pure_delay" => Ok(Mode::PureDelay),
        other => Err(PyValueError::new_err(format!("mode must be 'edf' or 'pure_delay', got {other:?}"))),
    }
}

#[pyclass(name = "Trajectory", module = "edffluid", frozen)]
struct PyTrajectory {
    traj: sim::Trajectory,
    obs: sim::Observables,
}

#[pymethods]
impl PyTrajectory {
    /// `(time, kind, customer_id)` for every event.
    fn events(&self) -> Vec<(f64, &'static str, usize)> {
        self.traj.events.iter().map(|e| (e.time, e.kind.as_str(), e.customer)).collect()
    }

    /// `(id, arrival_time, deadline, fate)` for every customer.
    fn customers(&self) -> Vec<(usize, f64, f64, String)> {
        self.traj
            .customers
            .iter()
            .map(|c| {
                let fate = match c.fate {
                    sim::Fate::Waiting => "waiting".to_string(),
                    sim::Fate::InService { .. } => "in_service".to_string(),
                    sim::Fate::Served { .. } => "served".to_string(),
                    sim::Fate::Lost { .. } => "lost".to_string(),
                };
                (c.id, c.arrival_time, c.deadline, fate)
            })
            .collect()
    }

    #[pyo3(signature = (t, before_starts=false))]
    fn profile_at(&self, t: f64, before_starts: bool) -> PyResult<PyPointMeasure> {
        let side = if before_starts { Snapshot::BeforeStarts } else { Snapshot::AfterStarts };
        self.traj.profile_at_with(t, side).py_err().map(PyPointMeasure)
    }

    /// `Q, P, S, X` and `t1` at time `t`.
    fn observables<'py>(&self, py: Python<'py>, t: f64) -> PyResult<Bound<'py, PyDict>> {
        if !(0.0..=self.traj.horizon()).contains(&t) {
            return Err(to_py(Error::OutOfRange { t, horizon: self.traj.horizon() }));
        }
        let p = self.obs.at(t);
        let d = PyDict::new(py);
        d.set_item("Q", p.q)?;
        d.set_item("P", p.p)?;
        d.set_item("S", p.s)?;
        d.set_item("X", p.x)?;
        d.set_item("t1", p.t1(t))?;
        Ok(d)
    }

    #[getter]
    fn tau0(&self) -> f64 {
        self.obs.tau0
    }

    #[getter]
    fn omega0(&self) -> f64 {
        self.obs.omega0
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.traj.horizon()
    }

    /// `M_φ(t)`; `compensator` is `"generator"` or `"busy_time"`.
    #[pyo3(signature = (phi, t, compensator="generator"))]
    fn martingale(&self, phi: &PyTestFunction, t: f64, compensator: &str) -> PyResult<f64> {
        sim::martingale_at(&self.traj, &phi.0, &self.params(compensator)?, t).py_err()
    }

    #[pyo3(signature = (phi, t, compensator="generator"))]
    fn bracket(&self, phi: &PyTestFunction, t: f64, compensator: &str) -> PyResult<f64> {
        sim::bracket_at(&self.traj, &phi.0, &self.params(compensator)?, t).py_err()
    }

    fn write_events_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| to_py(e.into()))?;
        self.traj.write_events_csv(std::io::BufWriter::new(file)).py_err()
    }

    fn __len__(&self) -> usize {
        self.traj.events.len()
    }
}

impl PyTrajectory {
    fn params(&self, compensator: &str) -> PyResult<MartingaleParams> {
        let c = match compensator {
            "generator" => Compensator::Generator,
            "busy_time" => Compensator::NonIdling,
            other => return Err(PyValueError::new_err(format!("unknown compensator {other:?}"))),
        };
        Ok(MartingaleParams::from_trajectory(&self.traj).with_compensator(c))
    }

    fn wrap(traj: sim::Trajectory) -> Self {
        let obs = sim::observables(&traj);
        Self { traj, obs }
    }
}

/// Simulates one trajectory.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (lam, mu, patience, initial_credits, horizon, seed=0, mode="edf"))]
fn simulate(
    py: Python<'_>,
    lam: f64,
    mu: f64,
    patience: &PyDistribution,
    initial_credits: Vec<f64>,
    horizon: f64,
    seed: u64,
    mode: &str,
) -> PyResult<PyTrajectory> {
    let config = SimConfig { lambda: lam, mu, patience: patience.0.clone(), initial_credits, horizon, seed, mode: parse_mode(mode)? };
    config.validate().py_err()?;
    py.detach(|| sim::run(&config)).py_err().map(PyTrajectory::wrap)
}

/// Replays scripted arrivals `(time, patience)` and service durations.
#[pyfunction]
#[pyo3(signature = (initial_credits, horizon, arrivals=Vec::new(), services=Vec::new(), mode="edf"))]
fn simulate_scripted(
    initial_credits: Vec<f64>,
    horizon: f64,
    arrivals: Vec<(f64, f64)>,
    services: Vec<f64>,
    mode: &str,
) -> PyResult<PyTrajectory> {
    let config = SimConfig {
        lambda: 0.0,
        mu: 0.0,
        patience: edffluid::Distribution::Deterministic { d: 1.0 },
        initial_credits,
        horizon,
        seed: 0,
        mode: parse_mode(mode)?,
    };
    config.validate().py_err()?;
    let arrivals: Vec<sim::ScriptedArrival> =
        arrivals.into_iter().map(|(time, patience)| sim::ScriptedArrival { time, patience }).collect();
    sim::run_scripted(&config, &arrivals, &services).py_err().map(PyTrajectory::wrap)
}

#[pyfunction]
#[pyo3(signature = (nu, phi, lam, mu, patience))]
fn generator_apply(nu: &PyPointMeasure, phi: &PyTestFunction, lam: f64, mu: f64, patience: &PyDistribution) -> PyResult<f64> {
    sim::generator_apply(&nu.0, &phi.0, lam, mu, &patience.0).py_err()
}

/// Fluid limit for deterministic deadlines in the overloaded regime.
#[pyclass(name = "DetEdf", module = "edffluid", frozen)]
struct PyDetEdf(DetEdf);

#[pymethods]
impl PyDetEdf {
    #[new]
    #[pyo3(signature = (lam, mu, d))]
    fn new(lam: f64, mu: f64, d: f64) -> PyResult<Self> {
        DetEdf::new(lam, mu, d).py_err().map(Self)
    }

    #[getter]
    fn omega_star(&self) -> f64 {
        self.0.omega_star()
    }

    fn q_fluid(&self, t: f64) -> f64 {
        self.0.q_fluid(t)
    }

    fn p_fluid(&self, t: f64) -> f64 {
        self.0.p_fluid(t)
    }

    fn r_bar(&self, t: f64) -> f64 {
        self.0.r_bar(t)
    }

    /// `⟨ν̄*_t, φ⟩` by the general quadrature formula.
    fn pair(&self, t: f64, phi: &PyTestFunction) -> PyResult<f64> {
        fluid::nu_fluid_general(t, &phi.0, &self.0.model(), &edffluid::QuadratureSpec::default()).py_err()
    }
}

#[pyfunction]
#[pyo3(signature = (t, lam, alpha))]
fn mginf_congestion(t: f64, lam: f64, alpha: &PyDistribution) -> f64 {
    fluid::mginf_congestion(t, lam, &alpha.0)
}

#[pyfunction]
#[pyo3(signature = (t, lam, alpha))]
fn mginf_served(t: f64, lam: f64, alpha: &PyDistribution) -> f64 {
    fluid::mginf_served(t, lam, &alpha.0)
}

#[pyfunction]
#[pyo3(signature = (t, lam, alpha))]
fn mginf_workload(t: f64, lam: f64, alpha: &PyDistribution) -> PyResult<f64> {
    fluid::mginf_workload(t, lam, &alpha.0).py_err()
}

#[pyfunction]
fn transport_cases() -> Vec<&'static str> {
    transport::case_names()
}

/// Residual check of a registered transport case: `(passed, max_residual)`.
#[pyfunction]
#[pyo3(signature = (case, tol=1e-6))]
fn transport_check(py: Python<'_>, case: &str, tol: f64) -> PyResult<(bool, f64)> {
    let found = transport::case_registry()
        .into_iter()
        .find(|c| c.name == case)
        .ok_or_else(|| PyValueError::new_err(format!("unknown case {case:?}; available: {}", transport::case_names().join(", "))))?;
    let report = py.detach(|| transport::check_case(&found, tol)).py_err()?;
    let worst = report.rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok((report.passed(), worst))
}

fn report_dict<'py>(py: Python<'py>, report: &harness::ConvergenceReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let summary: Vec<(u64, String, f64, f64)> = report
        .per_n
        .iter()
        .flat_map(|r| r.summary.iter().map(move |m| (r.n, m.metric.clone(), m.median, m.p90)))
        .collect();
    let flags: Vec<(String, bool)> = report.flags.iter().map(|f| (f.name.clone(), f.pass)).collect();
    d.set_item("summary", summary)?;
    d.set_item("flags", flags)?;
    d.set_item("passed", report.passed())?;
    Ok(d)
}

/// Deterministic-deadline convergence experiment. Returns a dict with
/// `summary` rows `(n, metric, median, p90)`, `flags` and `passed`; writes the
/// output directory when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (lam, mu, d, n_list, reps, horizon, master_seed=0, tolerance=None, pairing_points=50, out_dir=None))]
#[allow(clippy::too_many_arguments)]
fn convergence_experiment<'py>(
    py: Python<'py>,
    lam: f64,
    mu: f64,
    d: f64,
    n_list: Vec<u64>,
    reps: u64,
    horizon: f64,
    master_seed: u64,
    tolerance: Option<f64>,
    pairing_points: usize,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let settings = ExperimentSettings { tolerance, pairing_points, ..ExperimentSettings::new(n_list, reps, horizon, master_seed) };
    let report = py.detach(|| harness::convergence_experiment(lam, mu, d, &settings)).py_err()?;
    if let Some(dir) = out_dir {
        report.write_dir(&dir, 10).py_err()?;
    }
    report_dict(py, &report)
}

/// Pure-delay convergence experiment; same return shape.
#[pyfunction]
#[pyo3(signature = (lam, alpha, n_list, reps, horizon, master_seed=0, tolerance=None, out_dir=None))]
#[allow(clippy::too_many_arguments)]
fn mginf_experiment<'py>(
    py: Python<'py>,
    lam: f64,
    alpha: &PyDistribution,
    n_list: Vec<u64>,
    reps: u64,
    horizon: f64,
    master_seed: u64,
    tolerance: Option<f64>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let settings = ExperimentSettings { tolerance, ..ExperimentSettings::new(n_list, reps, horizon, master_seed) };
    let alpha = alpha.0.clone();
    let report = py.detach(|| harness::mginf_experiment(lam, &alpha, &settings)).py_err()?;
    if let Some(dir) = out_dir {
        report.write_dir(&dir, 10).py_err()?;
    }
    report_dict(py, &report)
}

#[pymodule]
#[pyo3(name = "edffluid")]
fn edffluid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyPointMeasure>()?;
    m.add_class::<PyDistribution>()?;
    m.add_class::<PyTestFunction>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyDetEdf>()?;
    m.add_function(wrap_pyfunction!(standard_test_suite, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_scripted, m)?)?;
    m.add_function(wrap_pyfunction!(generator_apply, m)?)?;
    m.add_function(wrap_pyfunction!(mginf_congestion, m)?)?;
    m.add_function(wrap_pyfunction!(mginf_served, m)?)?;
    m.add_function(wrap_pyfunction!(mginf_workload, m)?)?;
    m.add_function(wrap_pyfunction!(transport_cases, m)?)?;
    m.add_function(wrap_pyfunction!(transport_check, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(mginf_experiment, m)?)?;
    Ok(())
}
