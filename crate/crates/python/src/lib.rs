//! Python bindings. Curves and fits are exposed as read-only classes; the
//! sweep takes the same key = value settings as the config file.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ising_memory as core;
use ising_memory::dynamics::TrajectoryConfig;
use ising_memory::sweep::SweepSpec;
use ising_memory::{Couplings, Dimension, ModelParams, ReadoutPolicy, Temperature};

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn policy(name: &str) -> PyResult<ReadoutPolicy> {
    name.parse().map_err(err)
}

fn dimension(d: usize) -> PyResult<Dimension> {
    Dimension::from_usize(d).map_err(err)
}

#[pyclass(name = "Geometry", frozen)]
struct PyGeometry(Arc<core::Geometry>);

#[pymethods]
impl PyGeometry {
    #[new]
    fn new(dimension: usize, side: usize) -> PyResult<Self> {
        let g = core::Geometry::new(self::dimension(dimension)?, side).map_err(err)?;
        Ok(Self(Arc::new(g)))
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.0.dimension().as_usize()
    }

    #[getter]
    fn side(&self) -> usize {
        self.0.side()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn neighbors(&self, site: usize) -> PyResult<Vec<u32>> {
        if site >= self.0.n() {
            return Err(err(core::Error::SiteOutOfRange {
                site,
                n: self.0.n(),
            }));
        }
        Ok(self.0.neighbors(site).to_vec())
    }

    fn bonds(&self) -> Vec<(usize, usize)> {
        self.0.bonds().collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Geometry(dimension={}, side={})",
            self.dimension(),
            self.side()
        )
    }
}

#[pyclass(name = "FidelityCurve", frozen)]
struct PyCurve(core::FidelityCurve);

#[pymethods]
impl PyCurve {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn fidelity(&self) -> Vec<f64> {
        self.0.fidelity.clone()
    }

    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.0.sigma.clone()
    }

    #[getter]
    fn ensemble_size(&self) -> u64 {
        self.0.ensemble_size
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.meta.n
    }

    #[getter]
    fn kt(&self) -> f64 {
        self.0.meta.kt
    }

    #[getter]
    fn policy(&self) -> &'static str {
        self.0.meta.policy.as_str()
    }

    #[getter]
    fn exact(&self) -> bool {
        self.0.meta.exact
    }

    #[getter]
    fn truncated(&self) -> bool {
        self.0.meta.truncated
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.0.write(&path).map_err(err)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        core::FidelityCurve::read(&path).map(Self).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "FidelityCurve(n={}, kT={}, points={}, M={})",
            self.0.meta.n,
            self.0.meta.kt,
            self.0.len(),
            self.0.ensemble_size
        )
    }
}

#[pyclass(name = "ModelFit", frozen)]
struct PyFit(core::ModelFit);

#[pymethods]
impl PyFit {
    #[getter]
    fn model(&self) -> &'static str {
        self.0.model_kind.as_str()
    }

    #[getter]
    fn n_eff(&self) -> f64 {
        self.0.params.n_eff
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.params.lambda
    }

    /// (lower, upper) 90% interval for N_eff.
    #[getter]
    fn n_eff_interval(&self) -> (f64, f64) {
        (self.0.n_eff_ci.lower, self.0.n_eff_ci.upper)
    }

    #[getter]
    fn lambda_interval(&self) -> (f64, f64) {
        (self.0.lambda_ci.lower, self.0.lambda_ci.upper)
    }

    #[getter]
    fn chi2(&self) -> f64 {
        self.0.chi2
    }

    #[getter]
    fn dof(&self) -> usize {
        self.0.dof
    }

    #[getter]
    fn reduced_chi2(&self) -> f64 {
        self.0.reduced_chi2()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn unphysical(&self) -> bool {
        self.0.unphysical
    }

    fn evaluate(&self, t: f64) -> f64 {
        self.0.evaluate(t)
    }

    fn to_report(&self) -> String {
        self.0.to_report(None)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelFit(model={}, n_eff={:.6}, lambda={:.6}, chi2={:.3}, dof={})",
            self.model(),
            self.0.params.n_eff,
            self.0.params.lambda,
            self.0.chi2,
            self.0.dof
        )
    }
}

/// Monte-Carlo fidelity curve for one lattice, starting from the encoded bit 1.
#[pyfunction]
#[pyo3(signature = (geometry, kt, m, times, seed=1, policy="random-choice", j=1.0, h=0.0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    geometry: &PyGeometry,
    kt: f64,
    m: u64,
    times: Vec<f64>,
    seed: u64,
    policy: &str,
    j: f64,
    h: f64,
) -> PyResult<PyCurve> {
    let policy = self::policy(policy)?;
    let config = TrajectoryConfig::new(
        geometry.0.clone(),
        Couplings::new(j, h),
        Temperature::new(kt).map_err(err)?,
        seed,
        times,
    )
    .map_err(err)?;
    py.allow_threads(|| core::estimate_fidelity(&config, m, policy))
        .map(PyCurve)
        .map_err(err)
}

/// Exact fidelity from the master equation; lattices up to 16 sites.
#[pyfunction]
#[pyo3(signature = (geometry, kt, times, policy="random-choice", j=1.0, h=0.0))]
fn exact_fidelity(
    geometry: &PyGeometry,
    kt: f64,
    times: Vec<f64>,
    policy: &str,
    j: f64,
    h: f64,
) -> PyResult<PyCurve> {
    core::oracle::exact_fidelity(
        geometry.0.clone(),
        Couplings::new(j, h),
        Temperature::new(kt).map_err(err)?,
        &times,
        self::policy(policy)?,
        core::Bit::One,
    )
    .map(PyCurve)
    .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (curve, n=None))]
fn fit_gaussian(py: Python<'_>, curve: &PyCurve, n: Option<usize>) -> PyResult<PyFit> {
    let n = n.unwrap_or(curve.0.meta.n);
    py.allow_threads(|| core::fit_gaussian_model(&curve.0, n))
        .map(PyFit)
        .map_err(err)
}

#[pyfunction]
fn fit_exponential(py: Python<'_>, curve: &PyCurve) -> PyResult<PyFit> {
    py.allow_threads(|| core::fit_exponential_model(&curve.0))
        .map(PyFit)
        .map_err(err)
}

#[pyfunction]
fn gaussian_fidelity(n_eff: f64, lambda_: f64, t: f64) -> PyResult<f64> {
    let p = ModelParams::new(n_eff, lambda_).map_err(err)?;
    Ok(core::gaussian_fidelity(p, t))
}

#[pyfunction]
fn exponential_fidelity(lambda_: f64, t: f64) -> f64 {
    core::exponential_fidelity(lambda_, t)
}

#[pyfunction]
#[pyo3(signature = (n, lambda_, t, policy="declare-failure"))]
fn binomial_fidelity(n: u64, lambda_: f64, t: f64, policy: &str) -> PyResult<f64> {
    Ok(core::models::binomial_fidelity_with_policy(
        n,
        lambda_,
        t,
        self::policy(policy)?,
    ))
}

#[pyfunction]
fn sigma_f(fidelity: f64, m: u64) -> f64 {
    core::sigma_f(fidelity, m)
}

/// Runs a sweep. `settings` maps config keys to values, as in a config file.
/// Returns the summary table as text; curves and fits land under `outdir`.
#[pyfunction]
fn run_sweep(py: Python<'_>, settings: &Bound<'_, PyDict>) -> PyResult<String> {
    let mut spec = SweepSpec::new(Dimension::One, Vec::new(), Vec::new());
    for (k, v) in settings.iter() {
        let key: String = k.extract()?;
        let value = v.str()?.to_string();
        spec.set(&key, &value).map_err(err)?;
    }
    spec.validate().map_err(err)?;
    let result = py
        .allow_threads(|| core::sweep::run_sweep(&spec))
        .map_err(err)?;
    Ok(result.summary_tsv())
}

/// Scaling tables for a finished sweep directory.
#[pyfunction]
fn scaling_report(dir: PathBuf) -> PyResult<String> {
    let result = core::sweep::SweepResult::load(&dir).map_err(err)?;
    core::sweep::scaling_report(&result)
        .map(|r| r.to_text())
        .map_err(err)
}

#[pymodule]
pub fn ising_memory_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyCurve>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(exact_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(exponential_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_f, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_report, m)?)?;
    m.add("ONSAGER_CRITICAL_KT", core::ONSAGER_CRITICAL_KT)?;
    Ok(())
}
