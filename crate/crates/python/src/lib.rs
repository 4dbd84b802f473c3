//! Python bindings. Vectors cross the boundary as lists of floats.

use apgnc_core::diagnostics::{self, DEFAULT_TAIL_FRACTION};
use apgnc_core::experiment::{parse_schedule, run_solver, SolverKind, SolverSpec};
use apgnc_core::problems::{self, NnpcaConstraint};
use apgnc_core::{algorithms, prox, svrg, CompositeObjective, Error, RealVector, StepChoice};
use ndarray::Array1;
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(e.to_string()),
        Error::Diverged { .. } | Error::Numerical(_) | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vector(x: Vec<f64>) -> PyResult<RealVector> {
    RealVector::new(x).map_err(to_py)
}

#[pyclass(name = "Objective", frozen)]
struct PyObjective {
    inner: CompositeObjective,
}

#[pymethods]
impl PyObjective {
    /// Random NN-PCA instance; `constraint` is "ball" or "orthant".
    #[staticmethod]
    #[pyo3(signature = (n, d, gamma=1e-3, seed=0, constraint="ball", radius=1.0))]
    fn nnpca(n: usize, d: usize, gamma: f64, seed: u64, constraint: &str, radius: f64) -> PyResult<Self> {
        let c = match constraint {
            "ball" => NnpcaConstraint::OrthantBall { radius },
            "orthant" => NnpcaConstraint::Orthant,
            other => return Err(PyValueError::new_err(format!("unknown constraint {other:?}"))),
        };
        let (_, inner) = problems::generate_nnpca_with(n, d, gamma, seed, c).map_err(to_py)?;
        Ok(PyObjective { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (eigs, seed=0))]
    fn quadratic(eigs: Vec<f64>, seed: u64) -> PyResult<Self> {
        let inner = problems::quadratic_problem(&eigs, seed).map_err(to_py)?;
        Ok(PyObjective { inner })
    }

    #[staticmethod]
    fn quartic(d: usize) -> PyResult<Self> {
        let inner = problems::quartic_problem(d).map_err(to_py)?;
        Ok(PyObjective { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n_components()
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    /// `F(x)`, `inf` outside the domain of `g`.
    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        apgnc_core::eval_objective(&self.inner, &vector(x)?).map_err(to_py)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = vector(x)?;
        self.inner.check_dim(x.dim()).map_err(to_py)?;
        Ok(self.inner.smooth().gradient(x.view()).to_vec())
    }

    fn prox(&self, y: Vec<f64>, eta: f64) -> PyResult<Vec<f64>> {
        let y = vector(y)?;
        self.inner.check_dim(y.dim()).map_err(to_py)?;
        Ok(self.inner.nonsmooth().prox(y.view(), eta).to_vec())
    }

    fn prox_gradient_step(&self, y: Vec<f64>, eta: f64) -> PyResult<Vec<f64>> {
        let y = vector(y)?;
        self.inner.check_dim(y.dim()).map_err(to_py)?;
        Ok(prox::prox_gradient_step(&self.inner, y.view(), eta).to_vec())
    }

    /// Distance from zero to the subdifferential of `F` at a feasible `x`.
    fn kkt_residual(&self, x: Vec<f64>) -> PyResult<f64> {
        let x = vector(x)?;
        self.inner.check_dim(x.dim()).map_err(to_py)?;
        diagnostics::kkt_residual(&self.inner, x.view()).map_err(to_py)
    }

    /// SVRG gradient estimate for component `index` in `0..n`.
    fn svrg_gradient_estimate(
        &self,
        x: Vec<f64>,
        snapshot: Vec<f64>,
        g_full: Vec<f64>,
        index: usize,
    ) -> PyResult<Vec<f64>> {
        let (x, s, g) = (vector(x)?, vector(snapshot)?, vector(g_full)?);
        let v = svrg::svrg_gradient_estimate(&self.inner, x.view(), s.view(), g.view(), index).map_err(to_py)?;
        Ok(v.to_vec())
    }
}

#[pyclass(name = "Trace", frozen, get_all)]
struct PyTrace {
    f_x: Vec<f64>,
    f_y: Vec<f64>,
    passes: Vec<f64>,
    beta: Vec<f64>,
    residual: Vec<f64>,
    chose_extrapolation: Vec<bool>,
    final_x: Vec<f64>,
    final_value: f64,
    initial_value: f64,
    terminated_by: String,
}

#[pymethods]
impl PyTrace {
    fn __len__(&self) -> usize {
        self.f_x.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace(iterations={}, final_value={:e}, terminated_by={})",
            self.f_x.len(),
            self.final_value,
            self.terminated_by
        )
    }
}

impl From<apgnc_core::Trace> for PyTrace {
    fn from(t: apgnc_core::Trace) -> Self {
        let col = |f: fn(&apgnc_core::IterationRecord) -> f64| t.records.iter().map(f).collect::<Vec<_>>();
        PyTrace {
            f_x: col(|r| r.f_x),
            f_y: col(|r| r.f_y),
            passes: col(|r| r.passes),
            beta: col(|r| r.beta),
            residual: col(|r| r.residual),
            chose_extrapolation: t.records.iter().map(|r| r.chose_extrapolation).collect(),
            final_x: t.final_x.to_vec(),
            final_value: t.final_value,
            initial_value: t.initial_value,
            terminated_by: t.terminated_by.as_str().to_string(),
        }
    }
}

/// Runs a named solver for `budget` effective passes.
///
/// Solvers: pg, apg, mapg, apgnc, apgnc_plus, inexact_apgnc, prox_svrg,
/// svrg_apgnc, svrg_apgnc_plus, inexact_svrg_apgnc.
#[pyfunction]
#[pyo3(signature = (obj, x0, solver="apgnc", budget=100.0, seed=0, step=None, step_scale=None, m=None, rho=None, residual_tol=0.0, prox_error=None, grad_error=None))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    obj: &PyObjective,
    x0: Vec<f64>,
    solver: &str,
    budget: f64,
    seed: u64,
    step: Option<f64>,
    step_scale: Option<f64>,
    m: Option<usize>,
    rho: Option<f64>,
    residual_tol: f64,
    prox_error: Option<&str>,
    grad_error: Option<&str>,
) -> PyResult<PyTrace> {
    let kind = SolverKind::parse(solver).ok_or_else(|| PyValueError::new_err(format!("unknown solver {solver:?}")))?;
    let schedule = |s: &str| parse_schedule(s).ok_or_else(|| PyValueError::new_err(format!("bad schedule {s:?}")));
    let mut spec = SolverSpec::new(kind);
    spec.step = step;
    spec.step_scale = step_scale;
    spec.m = m;
    spec.rho = rho;
    spec.residual_tol = residual_tol;
    if let Some(s) = prox_error {
        spec.prox_error = schedule(s)?;
    }
    if let Some(s) = grad_error {
        spec.grad_error = schedule(s)?;
    }
    let x0 = vector(x0)?;
    let obj = obj.inner.clone();
    let trace = py.detach(move || run_solver(&spec, &obj, &x0, seed, budget)).map_err(to_py)?;
    Ok(trace.into())
}

/// Seeded random nonnegative unit vector.
#[pyfunction]
fn nonneg_unit_start(d: usize, seed: u64) -> PyResult<Vec<f64>> {
    Ok(problems::nonneg_unit_start(d, seed).map_err(to_py)?.to_vec())
}

#[pyfunction]
fn t_update(t: f64) -> f64 {
    algorithms::t_update(t)
}

/// Returns "prox" or "extrapolation"; ties go to the prox point.
#[pyfunction]
fn accept_step(f_prox: f64, f_extrap: f64) -> PyResult<&'static str> {
    Ok(match algorithms::accept_step(f_prox, f_extrap).map_err(to_py)? {
        StepChoice::Prox => "prox",
        StepChoice::Extrapolated => "extrapolation",
    })
}

#[pyfunction]
fn prox_l1(y: Vec<f64>, eta: f64, lam: f64) -> Vec<f64> {
    prox::prox_l1(Array1::from(y).view(), eta, lam).to_vec()
}

#[pyfunction]
fn prox_nonneg(y: Vec<f64>) -> Vec<f64> {
    prox::prox_nonneg(Array1::from(y).view(), 1.0).to_vec()
}

#[pyfunction]
fn check_rho_condition(rho: f64, m: usize, inexact: bool) -> bool {
    svrg::check_rho_condition(rho, m, inexact)
}

/// Returns `(rho, r_squared)` of a log-linear fit on the tail.
#[pyfunction]
#[pyo3(signature = (r, tail_fraction=DEFAULT_TAIL_FRACTION))]
fn fit_linear_rate(r: Vec<f64>, tail_fraction: f64) -> PyResult<(f64, f64)> {
    let fit = diagnostics::fit_linear_rate(&r, tail_fraction).map_err(to_py)?;
    Ok((fit.parameter, fit.r_squared))
}

/// Returns `(p, r_squared)` of a log-log fit `r_k ~ k^(-p)` on the tail.
#[pyfunction]
#[pyo3(signature = (r, tail_fraction=DEFAULT_TAIL_FRACTION))]
fn fit_power_rate(r: Vec<f64>, tail_fraction: f64) -> PyResult<(f64, f64)> {
    let fit = diagnostics::fit_power_rate(&r, tail_fraction).map_err(to_py)?;
    Ok((fit.parameter, fit.r_squared))
}

#[pymodule]
pub fn apgnc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObjective>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(nonneg_unit_start, m)?)?;
    m.add_function(wrap_pyfunction!(t_update, m)?)?;
    m.add_function(wrap_pyfunction!(accept_step, m)?)?;
    m.add_function(wrap_pyfunction!(prox_l1, m)?)?;
    m.add_function(wrap_pyfunction!(prox_nonneg, m)?)?;
    m.add_function(wrap_pyfunction!(check_rho_condition, m)?)?;
    m.add_function(wrap_pyfunction!(fit_linear_rate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_rate, m)?)?;
    Ok(())
}
