//! Python bindings for `qpspec-core`.
//!
//! Results that are structs on the Rust side come back as plain dicts.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use qpspec_core::cocycle::{symplectic_defect, transfer_matrix, TransferCocycle};
use qpspec_core::determinants::{self, Boundary};
use qpspec_core::family::builtins;
use qpspec_core::{ids, lyapunov, zeros, Frequency, LogDet, OperatorFamily, Phase, QpError};

fn err(e: QpError) -> PyErr {
    match e {
        QpError::StripViolation { .. }
        | QpError::Dimension(_)
        | QpError::Precondition(_)
        | QpError::NotDiophantine { .. }
        | QpError::InvalidSampling(_)
        | QpError::UnknownFamily(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_bound_py_any(py)?,
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py)?,
            None => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py)?,
        },
        Value::String(s) => s.into_bound_py_any(py)?,
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn dict<'py, T: serde::Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

fn frequency(omega: Option<f64>) -> PyResult<Frequency> {
    match omega {
        None => Ok(Frequency::golden()),
        Some(w) => Frequency::new(w).map_err(err),
    }
}

fn boundary(kind: &str) -> PyResult<Boundary> {
    match kind {
        "dirichlet" => Ok(Boundary::Dirichlet),
        "periodic" => Ok(Boundary::Periodic),
        _ => Err(PyValueError::new_err(format!(
            "unknown boundary `{kind}` (expected \"dirichlet\" or \"periodic\")"
        ))),
    }
}

fn logdet(d: LogDet) -> (f64, Complex64) {
    (d.log_mag, d.phase_unit)
}

/// A quasiperiodic Jacobi block operator family. `omega=None` means the
/// golden mean.
#[pyclass(name = "Family", frozen)]
struct PyFamily {
    inner: OperatorFamily,
}

#[pymethods]
impl PyFamily {
    #[staticmethod]
    #[pyo3(signature = (omega=None, delta=0.1))]
    fn free(omega: Option<f64>, delta: f64) -> PyResult<Self> {
        Ok(PyFamily { inner: builtins::free(frequency(omega)?, delta) })
    }

    /// Almost Mathieu: `v = 2 lambda cos 2 pi theta`.
    #[staticmethod]
    #[pyo3(signature = (lam=3.0, omega=None, delta=0.1))]
    fn amo(lam: f64, omega: Option<f64>, delta: f64) -> PyResult<Self> {
        Ok(PyFamily { inner: builtins::almost_mathieu(lam, frequency(omega)?, delta) })
    }

    #[staticmethod]
    #[pyo3(signature = (lam, degree, omega=None, delta=0.1))]
    fn cosine(lam: f64, degree: i64, omega: Option<f64>, delta: f64) -> PyResult<Self> {
        if degree == 0 {
            return Err(PyValueError::new_err("degree must be nonzero"));
        }
        Ok(PyFamily { inner: builtins::cosine(lam, degree, frequency(omega)?, delta) })
    }

    #[staticmethod]
    #[pyo3(signature = (lam=3.0, mu=0.0, beta=0.0, omega=None, delta=0.1))]
    fn block_demo(lam: f64, mu: f64, beta: f64, omega: Option<f64>, delta: f64) -> PyResult<Self> {
        Ok(PyFamily { inner: builtins::block_demo(lam, mu, beta, frequency(omega)?, delta) })
    }

    /// Family from its JSON description (Fourier tables of `B` and `V`).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(|inner| PyFamily { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("family serializes")
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    #[getter]
    fn degree(&self) -> i64 {
        self.inner.degree()
    }

    fn __repr__(&self) -> String {
        format!(
            "Family(d={}, omega={}, delta={}, degree={})",
            self.inner.d(),
            self.inner.omega(),
            self.inner.delta(),
            self.inner.degree()
        )
    }
}

/// Largest `|M^* Omega M - Omega|` of the one-step transfer matrix.
#[pyfunction]
fn symplectic_defect_at(fam: &PyFamily, energy: f64, theta: f64) -> PyResult<f64> {
    let m = transfer_matrix(&fam.inner, Complex64::new(energy, 0.0), Phase::real(theta)).map_err(err)?;
    symplectic_defect(&m).map_err(err)
}

/// Exponents `L_j` and sums `L^j` at `theta + i eps`.
#[pyfunction]
#[pyo3(signature = (fam, energy, eps=0.0, n=256, grid=500))]
fn lyapunov_exponents<'py>(
    py: Python<'py>,
    fam: &PyFamily,
    energy: f64,
    eps: f64,
    n: usize,
    grid: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let tc = TransferCocycle::new(&fam.inner, Complex64::new(energy, 0.0));
    let pt = py.detach(|| lyapunov::finite_scale_le(&tc, eps, n, grid)).map_err(err)?;
    dict(py, &pt)
}

#[pyfunction]
#[pyo3(signature = (fam, energy, eps0=0.01, n=1000, grid=500, step=lyapunov::DEFAULT_STEP))]
fn acceleration<'py>(
    py: Python<'py>,
    fam: &PyFamily,
    energy: f64,
    eps0: f64,
    n: usize,
    grid: usize,
    step: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let tc = TransferCocycle::new(&fam.inner, Complex64::new(energy, 0.0));
    let est = py.detach(|| lyapunov::acceleration(&tc, eps0, n, grid, step)).map_err(err)?;
    dict(py, &est)
}

/// `(log|D_n|, phase)` of the Dirichlet determinant.
#[pyfunction]
#[pyo3(signature = (fam, theta, energy, n, eps=0.0))]
fn dirichlet_det(fam: &PyFamily, theta: f64, energy: Complex64, n: usize, eps: f64) -> PyResult<(f64, Complex64)> {
    determinants::dirichlet_det(&fam.inner, Phase::new(theta, eps), energy, n)
        .map(logdet)
        .map_err(err)
}

/// `(log|f_n|, phase)` of the periodic block determinant.
#[pyfunction]
#[pyo3(signature = (fam, theta, energy, n, eps=0.0))]
fn periodic_det(fam: &PyFamily, theta: f64, energy: Complex64, n: usize, eps: f64) -> PyResult<(f64, Complex64)> {
    determinants::periodic_block_det(&fam.inner, Phase::new(theta, eps), energy, n)
        .map(logdet)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (fam, theta, energy, n, eps=0.0))]
fn detp_residual(fam: &PyFamily, theta: f64, energy: Complex64, n: usize, eps: f64) -> PyResult<f64> {
    determinants::detp_residual(&fam.inner, Phase::new(theta, eps), energy, n).map_err(err)
}

/// Entry `(x, y)` of the periodic resolvent via Cramer's rule.
#[pyfunction]
fn cramer_entry(fam: &PyFamily, theta: f64, energy: Complex64, n: usize, x: usize, y: usize) -> PyResult<Complex64> {
    determinants::cramer_entry(&fam.inner, Phase::real(theta), energy, n, x, y).map_err(err)
}

/// Zeros of the `n`-site determinant in the annulus `|eps| <= eps_half`.
#[pyfunction]
#[pyo3(signature = (fam, energy, n, eps_half=0.05, boundary="dirichlet", kappa_ref=None))]
fn zero_count<'py>(
    py: Python<'py>,
    fam: &PyFamily,
    energy: f64,
    n: usize,
    eps_half: f64,
    boundary: &str,
    kappa_ref: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = self::boundary(boundary)?;
    let spec = zeros::AnnulusSpec { eps_half };
    let rep = py
        .detach(|| zeros::annulus_zero_count(&fam.inner, Complex64::new(energy, 0.0), n, spec, kind, kappa_ref))
        .map_err(err)?;
    dict(py, &rep)
}

/// Companion-matrix roots of `z -> det(z)` for the `n`-site determinant.
#[pyfunction]
#[pyo3(signature = (fam, energy, n, boundary="dirichlet"))]
fn determinant_roots(fam: &PyFamily, energy: Complex64, n: usize, boundary: &str) -> PyResult<Vec<Complex64>> {
    zeros::linearized_roots(&fam.inner, energy, n, self::boundary(boundary)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (fam, energy, n, center, radius, eps_margin=0.1, kappa_cap=2, boundary="dirichlet"))]
#[allow(clippy::too_many_arguments)]
fn local_shift_search<'py>(
    py: Python<'py>,
    fam: &PyFamily,
    energy: f64,
    n: usize,
    center: Complex64,
    radius: f64,
    eps_margin: f64,
    kappa_cap: usize,
    boundary: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = self::boundary(boundary)?;
    let res = zeros::local_shift_search(
        &fam.inner,
        Complex64::new(energy, 0.0),
        n,
        center,
        radius,
        eps_margin,
        kappa_cap,
        kind,
    )
    .map_err(err)?;
    dict(py, &res)
}

/// Fraction of the `dN` Dirichlet eigenvalues below `energy`.
#[pyfunction]
fn ids_estimate(fam: &PyFamily, theta: f64, energy: f64, n: usize) -> PyResult<f64> {
    ids::ids_estimate(&fam.inner, theta, energy, n).map_err(err)
}

#[pyfunction]
fn nearest_eigenvalue(fam: &PyFamily, theta: f64, n: usize, target: f64) -> PyResult<f64> {
    ids::nearest_eigenvalue(&fam.inner, theta, n, target).map_err(err)
}

#[pyfunction]
fn finite_volume_spectrum(fam: &PyFamily, theta: f64, n: usize) -> PyResult<Vec<f64>> {
    ids::finite_volume_spectrum(&fam.inner, theta, 0, n, Boundary::Dirichlet).map_err(err)
}

#[pyfunction]
fn window_count<'py>(py: Python<'py>, fam: &PyFamily, theta: f64, energy: f64, eta: f64, n: usize) -> PyResult<Bound<'py, PyAny>> {
    let w = ids::window_count(&fam.inner, theta, energy, eta, n).map_err(err)?;
    dict(py, &w)
}

/// Power-law fit of phase-averaged window counts at `energy`.
#[pyfunction]
#[pyo3(signature = (fam, energy, eta_grid, n, thetas, kappa=1))]
fn holder_fit<'py>(
    py: Python<'py>,
    fam: &PyFamily,
    energy: f64,
    eta_grid: Vec<f64>,
    n: usize,
    thetas: Vec<f64>,
    kappa: i64,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = py
        .detach(|| ids::holder_fit(&fam.inner, energy, &eta_grid, n, &thetas, kappa))
        .map_err(err)?;
    dict(py, &rep)
}

/// `(slope, rms, dropped)` of `log d` against `log 2 eta`.
#[pyfunction]
fn fit_power_law(eta: Vec<f64>, d: Vec<f64>) -> PyResult<(f64, f64, Vec<f64>)> {
    ids::fit_power_law(&eta, &d).map_err(err)
}

/// Certificate `||k omega|| >= a / |k|^A` for `0 < |k| <= k_max`.
#[pyfunction]
#[pyo3(signature = (omega=None, k_max=100_000, a_floor=0.01))]
fn diophantine_certificate<'py>(py: Python<'py>, omega: Option<f64>, k_max: u64, a_floor: f64) -> PyResult<Bound<'py, PyAny>> {
    let cert = ids::diophantine_certificate(&frequency(omega)?, k_max, a_floor).map_err(err)?;
    dict(py, &cert)
}

#[pyfunction]
#[pyo3(signature = (omega=None, kappa0=zeros::DEFAULT_KAPPA0, n0=1, count=50))]
fn admissible_scales<'py>(py: Python<'py>, omega: Option<f64>, kappa0: f64, n0: u64, count: usize) -> PyResult<Bound<'py, PyAny>> {
    let s = ids::admissible_scales(&frequency(omega)?, kappa0, n0, count).map_err(err)?;
    dict(py, &s)
}

#[pymodule]
fn qpspec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyFamily>()?;
    m.add_function(wrap_pyfunction!(symplectic_defect_at, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(acceleration, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_det, m)?)?;
    m.add_function(wrap_pyfunction!(periodic_det, m)?)?;
    m.add_function(wrap_pyfunction!(detp_residual, m)?)?;
    m.add_function(wrap_pyfunction!(cramer_entry, m)?)?;
    m.add_function(wrap_pyfunction!(zero_count, m)?)?;
    m.add_function(wrap_pyfunction!(determinant_roots, m)?)?;
    m.add_function(wrap_pyfunction!(local_shift_search, m)?)?;
    m.add_function(wrap_pyfunction!(ids_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(finite_volume_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(window_count, m)?)?;
    m.add_function(wrap_pyfunction!(holder_fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(diophantine_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(admissible_scales, m)?)?;
    Ok(())
}
