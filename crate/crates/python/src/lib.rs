//! Python bindings for `hicrit`. Structured results come back as plain dicts
//! and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use hicrit::bubble::{self, KernelIndex};
use hicrit::energy::{self, CoefficientOverrides, ExpansionQuery};
use hicrit::geometry::{self, Expression};
use hicrit::reduction::{self, EpsilonSign, ErrorTerm, ScalingOptions, SearchOptions};
use hicrit::scenario::{run_scenario as run, ScenarioConfig};
use hicrit::special::{self, GammaIntegralQuery};
use hicrit::surface::Ellipsoid;

create_exception!(pyhicrit, HicritError, PyException);

fn err(e: hicrit::Error) -> PyErr {
    HicritError::new_err(e.to_string())
}

trait OrRaise<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for hicrit::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

/// `∫₀^∞ r^q (1+r)^{−p} dr` in closed form.
#[pyfunction]
fn gamma_integral(q: f64, p: f64) -> PyResult<f64> {
    special::gamma_integral_closed(GammaIntegralQuery::new(q, p).py()?).py()
}

/// The same integral by adaptive quadrature to absolute accuracy `tol`.
#[pyfunction]
#[pyo3(signature = (q, p, tol = 1e-12))]
fn gamma_integral_quadrature(q: f64, p: f64, tol: f64) -> PyResult<f64> {
    special::gamma_integral_quadrature(GammaIntegralQuery::new(q, p).py()?, tol).py()
}

#[pyfunction]
fn dimension_constants(py: Python<'_>, n: usize) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &special::dimension_constants(n).py()?)
}

#[pyfunction]
fn coefficients(py: Python<'_>, n: usize) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &energy::coefficients(n).py()?)
}

#[pyfunction]
#[pyo3(signature = (n, tol = 1e-8))]
fn appendix_identities(py: Python<'_>, n: usize, tol: f64) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &energy::appendix_identities(n, tol).py()?)
}

#[pyfunction]
#[pyo3(signature = (n, d, epsilon, dnu_a, tol = 1e-8))]
fn i2_direct_quadrature(n: usize, d: f64, epsilon: f64, dnu_a: f64, tol: f64) -> PyResult<f64> {
    energy::i2_direct_quadrature(n, d, epsilon, dnu_a, tol).py()
}

/// Term-by-term leading expansion of the reduced energy.
#[pyfunction]
#[pyo3(signature = (n, d, a, dnu_a, mean_curvature, epsilon, c1 = None, c2 = None, c3 = None, c4 = None, c5 = None))]
#[allow(clippy::too_many_arguments)]
fn expansion_terms<'py>(
    py: Python<'py>,
    n: usize,
    d: f64,
    a: f64,
    dnu_a: f64,
    mean_curvature: f64,
    epsilon: f64,
    c1: Option<f64>,
    c2: Option<f64>,
    c3: Option<f64>,
    c4: Option<f64>,
    c5: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let k = energy::coefficients(n).py()?;
    let q = ExpansionQuery::new(d, a, dnu_a, mean_curvature, epsilon).py()?;
    let o = CoefficientOverrides { c1, c2, c3, c4, c5 };
    to_py(py, &energy::expansion_terms(&k, &q, &o).py()?)
}

#[pyfunction]
fn weighted_curvature(n: usize, a: f64, dnu_a: f64, mean_curvature: f64) -> PyResult<f64> {
    geometry::weighted_curvature_from(n, a, dnu_a, mean_curvature).py()
}

#[pyfunction]
fn torus_threshold(mean_curvature: f64, n: usize) -> PyResult<f64> {
    geometry::torus_threshold(mean_curvature, n).py()
}

#[pyfunction]
fn critical_exponent(big_n: usize, h: usize) -> PyResult<f64> {
    geometry::critical_exponent(big_n, h).py()
}

#[pyfunction]
fn orbit_descriptor(py: Python<'_>, big_n: usize, m_list: Vec<u32>, m: usize) -> PyResult<Bound<'_, PyAny>> {
    let o = geometry::orbit_descriptor(big_n, &m_list, m).py()?;
    let dict = to_py(py, &o)?;
    dict.set_item("label", o.label())?;
    Ok(dict)
}

/// `(side, d0)` for the sign of `epsilon`; `d0` is `None` when no root exists.
#[pyfunction]
fn solve_d0(c4: f64, c5: f64, h_a: f64, epsilon: f64) -> PyResult<(String, Option<f64>)> {
    let sign = EpsilonSign::of(epsilon).ok_or_else(|| PyValueError::new_err("epsilon must be nonzero"))?;
    let s = reduction::solve_d0(c4, c5, h_a, sign).py()?;
    let side = format!("{:?}", s.side).to_lowercase();
    Ok((side, s.d0))
}

#[pyfunction]
fn reduced_gradient_d(c4: f64, c5: f64, h_a: f64, d: f64, epsilon: f64) -> f64 {
    reduction::reduced_gradient_d(c4, c5, h_a, d, epsilon)
}

#[pyfunction]
#[pyo3(signature = (term, grid, n = 5, d = 1.0, curvature = 1.0, resolution = 1))]
fn error_scaling_fit<'py>(
    py: Python<'py>,
    term: &str,
    grid: Vec<f64>,
    n: usize,
    d: f64,
    curvature: f64,
    resolution: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let term = match term {
        "I1" => ErrorTerm::I1,
        "I2" => ErrorTerm::I2,
        "I3" => ErrorTerm::I3,
        other => return Err(PyValueError::new_err(format!("unknown term '{other}'"))),
    };
    let opts = ScalingOptions { n, d, curvature, resolution, ..ScalingOptions::default() };
    let fit = py.detach(|| reduction::error_scaling_fit(term, &grid, &opts)).py()?;
    to_py(py, &fit)
}

#[pyfunction]
#[pyo3(signature = (beta, samples = 100_000, seed = 0))]
fn yyl_inequality_probe(py: Python<'_>, beta: f64, samples: usize, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &reduction::yyl_inequality_probe(beta, samples, seed).py()?)
}

/// Critical points of the expression weight `a(x1, …, xn)` on an axis-aligned
/// ellipsoid.
#[pyfunction]
fn critical_search<'py>(
    py: Python<'py>,
    weight: &str,
    center: Vec<f64>,
    semi_axes: Vec<f64>,
    seeds: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let a = Expression::parse(center.len(), weight).py()?;
    let surface = Ellipsoid::new(center, semi_axes).py()?;
    let found = py
        .detach(|| reduction::boundary_critical_search(&a, &surface, &seeds, &SearchOptions::default()))
        .py()?;
    to_py(py, &found)
}

/// Runs a TOML scenario in memory and returns the report.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let config = ScenarioConfig::from_toml(config).py()?;
    let (report, _) = py.detach(|| run(&config)).py()?;
    to_py(py, &report)
}

#[pyclass(name = "Bubble", frozen)]
struct PyBubble(bubble::Bubble);

#[pymethods]
impl PyBubble {
    #[new]
    #[pyo3(signature = (n, delta = 1.0, center = None))]
    fn new(n: usize, delta: f64, center: Option<Vec<f64>>) -> PyResult<Self> {
        let center = center.unwrap_or_else(|| vec![0.0; n]);
        Ok(Self(bubble::Bubble::new(n, delta, center).py()?))
    }

    #[getter]
    fn power(&self) -> f64 {
        self.0.power()
    }

    fn __call__(&self, x: Vec<f64>) -> f64 {
        self.0.eval(&x)
    }

    /// `Z^j`; `j = 0` is the dilation direction.
    fn kernel(&self, j: usize, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.0.kernel(KernelIndex::new(j, self.0.n()).py()?, &x))
    }

    fn residual(&self, x: Vec<f64>, h: f64) -> f64 {
        bubble::bubble_residual(&self.0, &x, h)
    }

    fn kernel_residual(&self, j: usize, x: Vec<f64>, h: f64) -> PyResult<f64> {
        Ok(bubble::kernel_residual(&self.0, KernelIndex::new(j, self.0.n()).py()?, &x, h))
    }

    fn __repr__(&self) -> String {
        format!("Bubble(n={}, delta={}, center={:?})", self.0.n(), self.0.delta(), self.0.center())
    }
}

#[pyclass(name = "CorrectorField", frozen)]
struct PyCorrectorField(bubble::CorrectorField);

#[pymethods]
impl PyCorrectorField {
    #[new]
    #[pyo3(signature = (curvatures, tol = None))]
    fn new(curvatures: Vec<f64>, tol: Option<f64>) -> PyResult<Self> {
        let mut c = bubble::CorrectorField::new(curvatures).py()?;
        if let Some(t) = tol {
            c = c.with_tolerance(t);
        }
        Ok(Self(c))
    }

    fn __call__(&self, py: Python<'_>, x: Vec<f64>) -> PyResult<f64> {
        py.detach(|| self.0.eval(&x)).py()
    }

    fn neumann_datum(&self, xp: Vec<f64>) -> f64 {
        self.0.neumann_datum(&xp)
    }

    fn flux_mismatch(&self, py: Python<'_>, xp: Vec<f64>, h: f64) -> PyResult<f64> {
        py.detach(|| bubble::corrector_boundary_flux_check(&self.0, &xp, h)).py()
    }
}

#[pymodule]
pub fn pyhicrit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HicritError", m.py().get_type::<HicritError>())?;
    m.add_class::<PyBubble>()?;
    m.add_class::<PyCorrectorField>()?;
    m.add_function(wrap_pyfunction!(gamma_integral, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_integral_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(dimension_constants, m)?)?;
    m.add_function(wrap_pyfunction!(coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(appendix_identities, m)?)?;
    m.add_function(wrap_pyfunction!(i2_direct_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(expansion_terms, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_curvature, m)?)?;
    m.add_function(wrap_pyfunction!(torus_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(critical_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(orbit_descriptor, m)?)?;
    m.add_function(wrap_pyfunction!(solve_d0, m)?)?;
    m.add_function(wrap_pyfunction!(reduced_gradient_d, m)?)?;
    m.add_function(wrap_pyfunction!(error_scaling_fit, m)?)?;
    m.add_function(wrap_pyfunction!(yyl_inequality_probe, m)?)?;
    m.add_function(wrap_pyfunction!(critical_search, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
