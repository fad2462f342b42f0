//! Python bindings for the soliton laboratory.

use g2soliton::analysis::{self, IntegratorConfig};
use g2soliton::closure::{self, COMPONENTS, DEFAULT_ORDER};
use g2soliton::domain::{self, EndClassification, EventKind, SymmetryGroup, Termination};
use g2soliton::precise::{self, TaylorSettings};
use g2soliton::{cli, oracles};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: g2soliton::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Closure data `(lambda, b, c)` at the singular orbit.
#[pyclass(frozen, skip_from_py_object, name = "ClosureParams", module = "g2soliton_py")]
#[derive(Clone, Copy)]
struct PyClosureParams(domain::ClosureParams);

#[pymethods]
impl PyClosureParams {
    #[new]
    #[pyo3(signature = (lambda_, b, c = 0.0, group = "su3"))]
    fn new(lambda_: f64, b: f64, c: f64, group: &str) -> PyResult<Self> {
        let group = match group.to_ascii_lowercase().as_str() {
            "su3" => SymmetryGroup::Su3,
            "sp2" => SymmetryGroup::Sp2,
            other => return Err(PyValueError::new_err(format!("unknown group {other:?}"))),
        };
        domain::ClosureParams::new(lambda_, b, c, group).map(Self).map_err(py_err)
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.lambda()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b()
    }

    #[getter]
    fn c(&self) -> f64 {
        self.0.c()
    }

    #[getter]
    fn group(&self) -> &'static str {
        match self.0.group() {
            SymmetryGroup::Su3 => "su3",
            SymmetryGroup::Sp2 => "sp2",
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "ClosureParams(lambda_={}, b={}, c={}, group={:?})",
            self.0.lambda(),
            self.0.b(),
            self.0.c(),
            self.group()
        )
    }
}

/// Metric and torsion coefficients on a principal orbit.
#[pyclass(frozen, skip_from_py_object, name = "PhasePoint", module = "g2soliton_py")]
#[derive(Clone, Copy)]
struct PyPhasePoint(domain::PhasePoint);

#[pymethods]
impl PyPhasePoint {
    #[new]
    fn new(f: [f64; 3], tau: [f64; 3]) -> PyResult<Self> {
        domain::PhasePoint::new(f, tau).map(Self).map_err(py_err)
    }

    #[getter]
    fn f(&self) -> [f64; 3] {
        self.0.f()
    }

    #[getter]
    fn tau(&self) -> [f64; 3] {
        self.0.tau()
    }

    fn constraint_residual(&self) -> f64 {
        domain::constraint_residual(&self.0)
    }

    fn recover_u(&self, lambda_: f64) -> f64 {
        domain::recover_u(&self.0, lambda_)
    }

    /// Derived quantities as a dict.
    fn observables<'py>(&self, py: Python<'py>, lambda_: f64) -> PyResult<Bound<'py, PyDict>> {
        let o = domain::observables(&self.0, lambda_);
        let d = PyDict::new(py);
        d.set_item("u", o.u)?;
        d.set_item("taubar", o.taubar)?;
        d.set_item("fbar", o.fbar)?;
        d.set_item("norm_tau_sq", o.norm_tau_sq)?;
        d.set_item("scalar_curvature", o.scalar_curvature)?;
        d.set_item("s", o.s)?;
        d.set_item("e", o.e)?;
        d.set_item("lambda_ratio", o.lambda_ratio)?;
        d.set_item("d_ratio", o.d_ratio)?;
        d.set_item("cl_residual", o.cl_residual)?;
        Ok(d)
    }

    /// `(d f_i^2/dt, d tau_i/dt)` of the first-order system.
    fn rhs(&self, lambda_: f64) -> ([f64; 3], [f64; 3]) {
        let r = g2soliton::systems::rhs_su3(&self.0, lambda_);
        (r.d_f_sq, r.d_tau)
    }

    fn __repr__(&self) -> String {
        format!("PhasePoint(f={:?}, tau={:?})", self.0.f(), self.0.tau())
    }
}

fn verdict(v: &EndClassification) -> (&'static str, Option<f64>) {
    match v {
        EndClassification::CompleteAcTorsionFree { rate } => (v.tag(), *rate),
        EndClassification::Incomplete { t_blowup } => (v.tag(), Some(*t_blowup)),
        _ => (v.tag(), None),
    }
}

fn event_name(kind: EventKind) -> &'static str {
    match kind {
        EventKind::F1EqualsF3 => "f1=f3",
        EventKind::F1EqualsF2 => "f1=f2",
        EventKind::BlowUp => "blow-up",
        EventKind::ExponentialEnd => "exponential-end",
        EventKind::ConeConvergence => "cone-convergence",
    }
}

/// Sampled solution with events and end verdict.
#[pyclass(frozen, name = "Trajectory", module = "g2soliton_py")]
struct PyTrajectory(domain::Trajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.0.samples.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn f(&self) -> Vec<[f64; 3]> {
        self.0.samples.iter().map(|s| s.point.f()).collect()
    }

    #[getter]
    fn tau(&self) -> Vec<[f64; 3]> {
        self.0.samples.iter().map(|s| s.point.tau()).collect()
    }

    #[getter]
    fn u(&self) -> Vec<f64> {
        self.0.samples.iter().map(|s| s.obs.u).collect()
    }

    #[getter]
    fn points(&self) -> Vec<PyPhasePoint> {
        self.0.samples.iter().map(|s| PyPhasePoint(s.point)).collect()
    }

    #[getter]
    fn events(&self) -> Vec<(&'static str, f64)> {
        self.0.events.iter().map(|e| (event_name(e.kind), e.t)).collect()
    }

    /// Termination reason and its time.
    #[getter]
    fn termination(&self) -> (&'static str, Option<f64>) {
        match &self.0.termination {
            Termination::ReachedTmax => ("reached-tmax", self.0.last().map(|s| s.t)),
            Termination::BlowUp { t } => ("blow-up", Some(*t)),
            Termination::ExponentialEnd { t } => ("exponential-end", Some(*t)),
            Termination::ConeConverged { t } => ("cone-converged", Some(*t)),
            Termination::StepCollapse { t, .. } => ("step-collapse", Some(*t)),
            Termination::InvalidState { t, .. } => ("invalid-state", Some(*t)),
        }
    }

    /// End verdict tag with the fitted rate (AC) or blow-up time (Inc).
    fn classify(&self) -> (&'static str, Option<f64>) {
        verdict(&analysis::classify_end(&self.0))
    }

    fn __len__(&self) -> usize {
        self.0.samples.len()
    }
}

/// Integrates the smoothly-closing solution with the adaptive double-precision solver.
#[pyfunction]
#[pyo3(signature = (params, t_max = 20.0, t0 = None, dt = None, order = DEFAULT_ORDER, rtol = 1e-12, atol = 1e-14))]
fn integrate(
    params: &PyClosureParams,
    t_max: f64,
    t0: Option<f64>,
    dt: Option<f64>,
    order: usize,
    rtol: f64,
    atol: f64,
) -> PyResult<PyTrajectory> {
    let cfg =
        IntegratorConfig { t_max, output_dt: dt, rtol, atol, stop_on_exponential_end: false, ..Default::default() };
    analysis::integrate_closure(&params.0, order, t0, &cfg).map(PyTrajectory).map_err(py_err)
}

/// Integrates with the 320-bit Taylor method; returns `(t, PhasePoint)` at the requested times.
#[pyfunction]
#[pyo3(signature = (params, times, t0 = 0.1))]
fn integrate_extended(params: &PyClosureParams, times: Vec<f64>, t0: f64) -> PyResult<Vec<(f64, PyPhasePoint)>> {
    let out =
        precise::integrate_closure_extended(&params.0, t0, &times, &TaylorSettings::extended()).map_err(py_err)?;
    Ok(out.into_iter().map(|(t, p)| (t, PyPhasePoint(p))).collect())
}

/// Series coefficients by component name (`f1`, ..., `taubar`, `u`), degrees `0..=order`.
#[pyfunction]
#[pyo3(signature = (params, order = DEFAULT_ORDER))]
fn series<'py>(py: Python<'py>, params: &PyClosureParams, order: usize) -> PyResult<Bound<'py, PyDict>> {
    let s = closure::build_series(&params.0, order).map_err(py_err)?;
    let d = PyDict::new(py);
    for (name, c) in COMPONENTS.iter().zip(&s.coefficients) {
        d.set_item(*name, c.clone())?;
    }
    Ok(d)
}

/// Series value at `t0` as a phase point.
#[pyfunction]
#[pyo3(signature = (params, t0, order = DEFAULT_ORDER))]
fn seed_point(params: &PyClosureParams, t0: f64, order: usize) -> PyResult<PyPhasePoint> {
    let s = closure::build_series(&params.0, order).map_err(py_err)?;
    closure::seed_point(&s, t0).map(PyPhasePoint).map_err(py_err)
}

/// Analytic steady verdict from the threshold `c^2 / b^2 = 9/2`.
#[pyfunction]
fn classify_steady_params(b: f64, c: f64) -> PyResult<&'static str> {
    analysis::classify_steady_params(b, c).map(|v| v.tag()).map_err(py_err)
}

/// Numerical steady verdict with the fitted rate (AC) or blow-up time (Inc).
#[pyfunction]
fn classify_steady(b: f64, c: f64) -> PyResult<(&'static str, Option<f64>)> {
    let (v, _) = analysis::classify_steady(b, c, &analysis::classification_config()).map_err(py_err)?;
    Ok(verdict(&v))
}

/// Bisects in `b` at fixed `c`; returns `(estimate, (lo, hi))`.
#[pyfunction]
#[pyo3(signature = (c, b_lo, b_hi, tol = 1e-3))]
fn find_boundary(c: f64, b_lo: f64, b_hi: f64, tol: f64) -> PyResult<(f64, (f64, f64))> {
    let rep = analysis::find_boundary(c, b_lo, b_hi, tol).map_err(py_err)?;
    Ok((rep.estimate, rep.bracket))
}

/// Eigenvalue real parts of the cone linearisation on the constraint tangent space.
#[pyfunction]
fn cone_spectrum() -> Vec<f64> {
    analysis::cone_linearization().eigenvalues.iter().map(|e| e.0).collect()
}

/// Fixed points of the polynomial steady system with their eigenvalue real parts.
#[pyfunction]
fn poly_fixed_points(c: f64) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
    let fps = analysis::poly_fixed_points(c).map_err(py_err)?;
    Ok(fps.into_iter().map(|fp| (fp.location, fp.eigenvalues.iter().map(|e| e.0).collect())).collect())
}

/// Closed-form critical steady soliton at `t`.
#[pyfunction]
fn explicit_steady(t: f64) -> PyResult<(PyPhasePoint, f64)> {
    let v = oracles::explicit_steady(t).map_err(py_err)?;
    Ok((PyPhasePoint(v.point().map_err(py_err)?), v.u))
}

/// Closed-form shrinker at `t`: `(PhasePoint, u, lambda)`.
#[pyfunction]
fn explicit_shrinker(b: f64, t: f64) -> PyResult<(PyPhasePoint, f64, f64)> {
    let (q, u, lambda) = oracles::explicit_shrinker(b, t).map_err(py_err)?;
    Ok((PyPhasePoint(q.embed()), u, lambda))
}

/// Runs every oracle check: `(name, passed, value, tolerance)`.
#[pyfunction]
fn oracle_check() -> PyResult<Vec<(String, bool, f64, f64)>> {
    let items = cli::oracle_checks(false).map_err(py_err)?;
    Ok(items.into_iter().map(|i| (i.name, i.passed, i.value, i.tolerance)).collect())
}

#[pymodule]
fn g2soliton_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClosureParams>()?;
    m.add_class::<PyPhasePoint>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_extended, m)?)?;
    m.add_function(wrap_pyfunction!(series, m)?)?;
    m.add_function(wrap_pyfunction!(seed_point, m)?)?;
    m.add_function(wrap_pyfunction!(classify_steady_params, m)?)?;
    m.add_function(wrap_pyfunction!(classify_steady, m)?)?;
    m.add_function(wrap_pyfunction!(find_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(cone_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(poly_fixed_points, m)?)?;
    m.add_function(wrap_pyfunction!(explicit_steady, m)?)?;
    m.add_function(wrap_pyfunction!(explicit_shrinker, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    Ok(())
}
