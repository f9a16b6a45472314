//! Python bindings: scenario handling, admissibility checks, certificate
//! constants, trajectory runs, decay certificates and generator spectra.

use degenbeam::analysis;
use degenbeam::evolution::{assemble_closed_loop, simulate};
use degenbeam::model::{certificate_constants, classify_degeneracy, validate_assumptions};
use degenbeam::scenario;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::collections::BTreeMap;

fn to_py_err(e: degenbeam::Error) -> PyErr {
    match e {
        degenbeam::Error::Numerical { .. } | degenbeam::Error::Eigensolver => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Degeneracy class and ratio constant of the power-law rigidity `x^alpha`.
#[pyfunction]
fn classify_power_law(alpha: f64) -> PyResult<(String, f64)> {
    let prof = degenbeam::model::RigidityProfile::power_law(alpha).map_err(to_py_err)?;
    let rep = classify_degeneracy(&prof);
    Ok((rep.class.as_str().to_string(), rep.k_sigma))
}

/// Trajectory of one closed-loop run.
#[pyclass]
struct RunResult {
    #[pyo3(get)]
    t: Vec<f64>,
    #[pyo3(get)]
    e: Vec<f64>,
    #[pyo3(get)]
    g: Option<Vec<f64>>,
    #[pyo3(get)]
    l: Option<Vec<f64>>,
    #[pyo3(get)]
    ut1: Vec<f64>,
    #[pyo3(get)]
    w1: Vec<f64>,
}

/// Outcome of the decay certificate.
#[pyclass]
struct CertifyResult {
    #[pyo3(get)]
    valid: bool,
    #[pyo3(get)]
    theta_hat: Option<f64>,
    /// `(name, pass, slack)` per check, in evaluation order.
    #[pyo3(get)]
    checks: Vec<(String, bool, f64)>,
    #[pyo3(get)]
    m_decay: f64,
}

/// A scenario file: problem data plus discretization and output settings.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_path(path: &str) -> PyResult<Self> {
        scenario::Scenario::from_path(std::path::Path::new(path))
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        scenario::Scenario::parse(text)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    /// Canonical serialization; parses back to an equal scenario.
    fn serialize(&self) -> String {
        self.inner.serialize()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[setter]
    fn set_n(&mut self, n: usize) {
        self.inner.n = n;
    }

    #[setter]
    fn set_m_d(&mut self, m: usize) {
        self.inner.m_d = m;
    }

    #[setter]
    fn set_dt(&mut self, dt: f64) {
        self.inner.dt = dt;
    }

    #[setter]
    fn set_t_final(&mut self, t: f64) {
        self.inner.t_final = t;
    }

    #[setter]
    fn set_stride(&mut self, s: usize) {
        self.inner.stride = s;
    }

    #[setter]
    fn set_kd(&mut self, kd: f64) {
        self.inner.kd = kd;
    }

    #[setter]
    fn set_tau(&mut self, tau: f64) {
        self.inner.tau = tau;
    }

    /// Every structural assumption as `(name, pass, measured)`.
    fn validate(&self) -> PyResult<Vec<(String, bool, f64)>> {
        let config = self.inner.to_model_config().map_err(to_py_err)?;
        let report = validate_assumptions(&config);
        Ok(report
            .checks
            .iter()
            .map(|c| (c.name.clone(), c.pass, c.measured))
            .collect())
    }

    /// The full certificate constant chain as a name -> value dict.
    fn constants(&self) -> PyResult<BTreeMap<String, f64>> {
        let config = self.inner.to_model_config().map_err(to_py_err)?;
        let c = certificate_constants(&config).map_err(to_py_err)?;
        Ok(c.named().into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    /// Simulates the scenario and returns the recorded trajectory.
    fn run(&self) -> PyResult<RunResult> {
        let config = self.inner.to_model_config().map_err(to_py_err)?;
        let consts = certificate_constants(&config).ok();
        let sys = assemble_closed_loop(&config, self.inner.n, self.inner.beta, Some(self.inner.m_d))
            .map_err(to_py_err)?;
        let integ = self.inner.integrator().map_err(to_py_err)?;
        let rec = simulate(&sys, &integ, consts.as_ref(), false).map_err(to_py_err)?;
        Ok(RunResult {
            t: rec.times,
            e: rec.energy,
            g: rec.lyap_g,
            l: rec.lyap_l,
            ut1: rec.ut1,
            w1: rec.w1,
        })
    }

    /// Runs the full decay certificate.
    fn certify(&self) -> PyResult<CertifyResult> {
        let config = self.inner.to_model_config().map_err(to_py_err)?;
        let consts = certificate_constants(&config).map_err(to_py_err)?;
        let sys = assemble_closed_loop(&config, self.inner.n, self.inner.beta, Some(self.inner.m_d))
            .map_err(to_py_err)?;
        let integ = self.inner.integrator().map_err(to_py_err)?;
        let rec = simulate(&sys, &integ, Some(&consts), false).map_err(to_py_err)?;
        let cert = analysis::certify(&sys, &rec, &consts).map_err(to_py_err)?;
        Ok(CertifyResult {
            valid: cert.valid,
            theta_hat: cert.theta_hat,
            checks: cert
                .checks
                .iter()
                .map(|c| (c.name.clone(), c.pass, c.slack))
                .collect(),
            m_decay: consts.m_decay,
        })
    }

    /// Spectral abscissa of the assembled closed-loop generator.
    #[pyo3(signature = (dim_cap = 2000))]
    fn spectral_abscissa(&self, dim_cap: usize) -> PyResult<f64> {
        let config = self.inner.to_model_config().map_err(to_py_err)?;
        let sys = assemble_closed_loop(&config, self.inner.n, self.inner.beta, Some(self.inner.m_d))
            .map_err(to_py_err)?;
        let rep = analysis::spectrum(&sys, dim_cap).map_err(to_py_err)?;
        Ok(rep.abscissa)
    }
}

#[pymodule]
fn degenbeam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(classify_power_law, m)?)?;
    m.add_class::<Scenario>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<CertifyResult>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
