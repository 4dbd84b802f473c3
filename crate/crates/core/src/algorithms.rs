//! Full-gradient solvers: proximal gradient, APG, monotone APG, APGnc, APGnc
//! with adaptive momentum, and inexact APGnc.
//!
//! Every solver starts from `x0`, runs at most `max_iters` outer iterations and
//! stops early once the residual bound `(L + 1/η)·step_norm` drops to
//! `residual_tol`. One full-gradient evaluation counts as one effective pass;
//! function values are free.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1};
use rand::RngCore;

use crate::diagnostics::subdifferential_perturbation_nonneg;
use crate::error::{Error, Result};
use crate::objective::{dist, CompositeObjective, RealVector, RegularizerKind};
use crate::prox::{forward_point, inexact_prox, InexactProxRequest, DEFAULT_BAND_FLOOR};
use crate::rng;
use crate::trace::{InexactMonitor, IterationRecord, Termination, Trace};

/// Momentum rule for the extrapolation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentumSchedule {
    /// No extrapolation (`β ≡ 0`).
    None,
    /// Nesterov's `t`-sequence used by APG and monotone APG.
    Nesterov,
    /// `β_k = k / (k + 3)`.
    RatioK,
    /// Shrink `β ← t·β` when the prox point wins, grow `β ← min(β/t, 1)` when the
    /// extrapolated point wins.
    Adaptive { beta0: f64, shrink: f64 },
}

impl MomentumSchedule {
    pub fn adaptive_default() -> Self {
        MomentumSchedule::Adaptive { beta0: 0.5, shrink: 0.5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MomentumSchedule::None => "none",
            MomentumSchedule::Nesterov => "nesterov_t",
            MomentumSchedule::RatioK => "ratio_k",
            MomentumSchedule::Adaptive { .. } => "adaptive",
        }
    }

    pub(crate) fn validate_adaptive(&self) -> Result<()> {
        if let MomentumSchedule::Adaptive { beta0, shrink } = *self {
            if !(beta0 > 0.0 && beta0 <= 1.0) {
                return Err(Error::InvalidInput(format!("beta0 must lie in (0, 1], got {beta0}")));
            }
            if !(shrink > 0.0 && shrink < 1.0) {
                return Err(Error::InvalidInput(format!("shrink must lie in (0, 1), got {shrink}")));
            }
        }
        Ok(())
    }
}

/// `β` for iteration `k`. `current` is the running value of the adaptive rule.
pub fn momentum_beta(schedule: &MomentumSchedule, k: usize, current: f64) -> Result<f64> {
    match schedule {
        MomentumSchedule::None => Ok(0.0),
        MomentumSchedule::RatioK => Ok(k as f64 / (k as f64 + 3.0)),
        MomentumSchedule::Adaptive { .. } => Ok(current),
        MomentumSchedule::Nesterov => Err(Error::Unsupported("the Nesterov schedule has no β_k; use t_update".into())),
    }
}

/// `t_{k+1} = (√(4t_k² + 1) + 1) / 2`.
pub fn t_update(t: f64) -> f64 {
    ((4.0 * t * t + 1.0).sqrt() + 1.0) / 2.0
}

/// State of the adaptive momentum rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveMomentum {
    pub beta: f64,
    pub shrink: f64,
}

impl AdaptiveMomentum {
    pub fn update(&mut self, choice: StepChoice) {
        self.beta = match choice {
            StepChoice::Prox => self.shrink * self.beta,
            StepChoice::Extrapolated => (self.beta / self.shrink).min(1.0),
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepChoice {
    Prox,
    Extrapolated,
}

/// Prox point wins ties.
pub fn accept_step(f_prox: f64, f_extrap: f64) -> Result<StepChoice> {
    if f_prox.is_nan() || f_extrap.is_nan() {
        return Err(Error::Diverged { iteration: 0, reason: "objective is NaN".into() });
    }
    if f_prox == f64::INFINITY && f_extrap == f64::INFINITY {
        return Err(Error::Diverged { iteration: 0, reason: "both candidates are infeasible".into() });
    }
    if f_prox <= f_extrap {
        Ok(StepChoice::Prox)
    } else {
        Ok(StepChoice::Extrapolated)
    }
}

/// Magnitude schedule for gradient errors `‖e_k‖` or prox gaps `ε_k`.
///
/// Deterministic solvers evaluate it at `k = 1, 2, …`; the SVRG solvers at
/// `(epoch, inner step)` with epochs counted from 0.
#[derive(Clone, Default)]
pub enum ErrorSchedule {
    #[default]
    Zero,
    Constant(f64),
    /// `scale / k³`.
    InverseCubic {
        scale: f64,
    },
    /// `min(scale / k³, cap)`.
    CappedInverseCubic {
        scale: f64,
        cap: f64,
    },
    Custom(Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for ErrorSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorSchedule::Zero => write!(f, "Zero"),
            ErrorSchedule::Constant(c) => write!(f, "Constant({c})"),
            ErrorSchedule::InverseCubic { scale } => write!(f, "InverseCubic({scale})"),
            ErrorSchedule::CappedInverseCubic { scale, cap } => {
                write!(f, "CappedInverseCubic({scale}, {cap})")
            }
            ErrorSchedule::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ErrorSchedule {
    pub fn at(&self, k: usize) -> f64 {
        self.at_inner(k, 0)
    }

    pub fn at_inner(&self, k: usize, t: usize) -> f64 {
        let cube = (k as f64).powi(3);
        match self {
            ErrorSchedule::Zero => 0.0,
            ErrorSchedule::Constant(c) => *c,
            ErrorSchedule::InverseCubic { scale } => scale / cube,
            ErrorSchedule::CappedInverseCubic { scale, cap } => (scale / cube).min(*cap),
            ErrorSchedule::Custom(f) => f(k, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ErrorSchedule::Zero)
    }

    pub(crate) fn checked(&self, k: usize, t: usize) -> Result<f64> {
        let v = self.at_inner(k, t);
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "error schedule produced {v} at (k={k}, t={t}); expected a finite nonnegative value"
            )));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub step_size: f64,
    pub momentum: MomentumSchedule,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub grad_error: ErrorSchedule,
    pub prox_error: ErrorSchedule,
    pub band_floor: f64,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(step_size: f64, momentum: MomentumSchedule) -> Self {
        SolverConfig {
            step_size,
            momentum,
            max_iters: 1000,
            residual_tol: 0.0,
            grad_error: ErrorSchedule::Zero,
            prox_error: ErrorSchedule::Zero,
            band_floor: DEFAULT_BAND_FLOOR,
            seed: 0,
        }
    }

    pub fn max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn residual_tol(mut self, tol: f64) -> Self {
        self.residual_tol = tol;
        self
    }

    pub fn grad_error(mut self, s: ErrorSchedule) -> Self {
        self.grad_error = s;
        self
    }

    pub fn prox_error(mut self, s: ErrorSchedule) -> Self {
        self.prox_error = s;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self, obj: &CompositeObjective) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::InvalidInput("residual_tol must be nonnegative".into()));
        }
        if !(self.band_floor > 0.0 && self.band_floor < 1.0) {
            return Err(Error::InvalidInput("band_floor must lie in (0, 1)".into()));
        }
        let l = obj.lipschitz();
        if self.step_size * l >= 1.0 {
            log::warn!("step size {} is not below 1/L = {}; descent guarantees do not apply", self.step_size, 1.0 / l);
        }
        Ok(())
    }
}

fn diverged(iteration: usize, reason: impl Into<String>) -> Error {
    Error::Diverged { iteration, reason: reason.into() }
}

fn finite_value(obj: &CompositeObjective, x: ArrayView1<f64>, k: usize) -> Result<f64> {
    let v = obj.eval(x);
    if !v.is_finite() {
        return Err(diverged(k, format!("objective at the new iterate is {v}")));
    }
    Ok(v)
}

fn start(obj: &CompositeObjective, x0: &RealVector) -> Result<(Array1<f64>, f64)> {
    obj.check_dim(x0.dim())?;
    let f0 = obj.eval(x0.view());
    if f0.is_nan() || f0 == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(format!("objective at x0 is {f0}")));
    }
    Ok((x0.as_array().clone(), f0))
}

fn finish(
    records: Vec<IterationRecord>,
    final_x: Array1<f64>,
    initial_value: f64,
    terminated_by: Termination,
    monitor: Option<InexactMonitor>,
) -> Result<Trace> {
    let iteration = records.len();
    let final_value = records.last().map(|r| r.f_x).unwrap_or(initial_value);
    let final_x = RealVector::from_array(final_x).map_err(|_| diverged(iteration, "final iterate is not finite"))?;
    Ok(Trace { records, final_x, final_value, initial_value, terminated_by, monitor, epochs: Vec::new() })
}

struct Steps<'a> {
    obj: &'a CompositeObjective,
    eta: f64,
    residual_scale: f64,
}

impl<'a> Steps<'a> {
    fn new(obj: &'a CompositeObjective, eta: f64) -> Self {
        Steps { obj, eta, residual_scale: obj.lipschitz() + 1.0 / eta }
    }

    fn prox_grad(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let grad = self.obj.smooth().gradient(y);
        self.obj.nonsmooth().prox(forward_point(y, &grad, self.eta).view(), self.eta)
    }
}

/// Plain proximal gradient, `x_{k+1} = prox_{ηg}(x_k − η∇f(x_k))`.
pub fn run_proximal_gradient(obj: &CompositeObjective, x0: &RealVector, cfg: &SolverConfig) -> Result<Trace> {
    if cfg.momentum != MomentumSchedule::None {
        return Err(Error::InvalidInput("proximal gradient takes no momentum".into()));
    }
    cfg.validate(obj)?;
    let (mut x, f0) = start(obj, x0)?;
    let steps = Steps::new(obj, cfg.step_size);
    let mut f_cur = f0;
    let mut records = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut terminated_by = Termination::MaxIters;

    for k in 1..=cfg.max_iters {
        let x_next = steps.prox_grad(x.view());
        let f_next = finite_value(obj, x_next.view(), k)?;
        let step_norm = dist(x_next.view(), x.view());
        let residual = steps.residual_scale * step_norm;
        records.push(IterationRecord {
            k,
            f_x: f_next,
            f_y: f_cur,
            step_norm,
            residual,
            beta: 0.0,
            passes: k as f64,
            chose_extrapolation: false,
            eps_realized: 0.0,
            grad_err_realized: 0.0,
        });
        x = x_next;
        f_cur = f_next;
        if residual <= cfg.residual_tol {
            terminated_by = Termination::Tolerance;
            break;
        }
    }
    finish(records, x, f0, terminated_by, None)
}

/// Accelerated proximal gradient with Nesterov's `t`-sequence (`t₀ = 0`, `t₁ = 1`).
/// Not a descent method; intended for convex problems.
pub fn run_apg(obj: &CompositeObjective, x0: &RealVector, cfg: &SolverConfig) -> Result<Trace> {
    if cfg.momentum != MomentumSchedule::Nesterov {
        return Err(Error::InvalidInput("APG requires the Nesterov schedule".into()));
    }
    cfg.validate(obj)?;
    let (x_start, f0) = start(obj, x0)?;
    let steps = Steps::new(obj, cfg.step_size);
    let mut x_prev = x_start.clone();
    let mut x = x_start;
    let (mut t_prev, mut t) = (0.0, 1.0);
    let mut records = Vec::new();
    let mut terminated_by = Termination::MaxIters;

    for k in 1..=cfg.max_iters {
        let coef = (t_prev - 1.0) / t;
        let mut y = x.clone();
        y.scaled_add(coef, &(&x - &x_prev));
        let f_y = obj.eval(y.view());
        let x_next = steps.prox_grad(y.view());
        let f_next = finite_value(obj, x_next.view(), k)?;
        let step_norm = dist(x_next.view(), y.view());
        let residual = steps.residual_scale * step_norm;
        records.push(IterationRecord {
            k,
            f_x: f_next,
            f_y,
            step_norm,
            residual,
            beta: coef,
            passes: k as f64,
            chose_extrapolation: coef > 0.0,
            eps_realized: 0.0,
            grad_err_realized: 0.0,
        });
        t_prev = t;
        t = t_update(t);
        x_prev = std::mem::replace(&mut x, x_next);
        if residual <= cfg.residual_tol {
            terminated_by = Termination::Tolerance;
            break;
        }
    }
    finish(records, x, f0, terminated_by, None)
}

/// Monotone APG: two prox-gradient steps per iteration (two passes), keeping
/// whichever of `z_{k+1}` (from the extrapolated point) and `v_{k+1}` (from
/// `x_k`) has the smaller objective; `z` wins ties. `z₁ = x₀`.
pub fn run_mapg(obj: &CompositeObjective, x0: &RealVector, cfg: &SolverConfig) -> Result<Trace> {
    if cfg.momentum != MomentumSchedule::Nesterov {
        return Err(Error::InvalidInput("monotone APG requires the Nesterov schedule".into()));
    }
    cfg.validate(obj)?;
    let (x_start, f0) = start(obj, x0)?;
    let steps = Steps::new(obj, cfg.step_size);
    let mut x_prev = x_start.clone();
    let mut z = x_start.clone();
    let mut x = x_start;
    let (mut t_prev, mut t) = (0.0, 1.0);
    let mut records = Vec::new();
    let mut terminated_by = Termination::MaxIters;

    for k in 1..=cfg.max_iters {
        let mut y = x.clone();
        y.scaled_add(t_prev / t, &(&z - &x));
        y.scaled_add((t_prev - 1.0) / t, &(&x - &x_prev));
        let f_y = obj.eval(y.view());
        let z_next = steps.prox_grad(y.view());
        let v_next = steps.prox_grad(x.view());
        let f_z = obj.eval(z_next.view());
        let f_v = obj.eval(v_next.view());
        if f_z.is_nan() || f_v.is_nan() || (f_z == f64::INFINITY && f_v == f64::INFINITY) {
            return Err(diverged(k, "both monotone APG candidates are invalid"));
        }
        let (x_next, f_next, step_norm, took_z) = if f_z <= f_v {
            let s = dist(z_next.view(), y.view());
            (z_next.clone(), f_z, s, true)
        } else {
            let s = dist(v_next.view(), x.view());
            (v_next, f_v, s, false)
        };
        if !f_next.is_finite() {
            return Err(diverged(k, format!("objective at the new iterate is {f_next}")));
        }
        let residual = steps.residual_scale * step_norm;
        records.push(IterationRecord {
            k,
            f_x: f_next,
            f_y,
            step_norm,
            residual,
            beta: t_prev / t,
            passes: 2.0 * k as f64,
            chose_extrapolation: took_z,
            eps_realized: 0.0,
            grad_err_realized: 0.0,
        });
        t_prev = t;
        t = t_update(t);
        z = z_next;
        x_prev = std::mem::replace(&mut x, x_next);
        if residual <= cfg.residual_tol {
            terminated_by = Termination::Tolerance;
            break;
        }
    }
    finish(records, x, f0, terminated_by, None)
}

/// APGnc: one prox-gradient step from `y_k`, then the extrapolation
/// `v_k = x_k + β_k(x_k − x_{k−1})` is kept only if it does not increase `F`.
/// Accepts `RatioK`, or `None` for `β ≡ 0`.
pub fn run_apgnc(obj: &CompositeObjective, x0: &RealVector, cfg: &SolverConfig) -> Result<Trace> {
    match cfg.momentum {
        MomentumSchedule::RatioK | MomentumSchedule::None => {}
        other => return Err(Error::InvalidInput(format!("APGnc takes the ratio_k schedule, got {}", other.name()))),
    }
    if !cfg.grad_error.is_zero() || !cfg.prox_error.is_zero() {
        return Err(Error::InvalidInput("error schedules are only honoured by run_inexact_apgnc".into()));
    }
    apgnc_family(obj, x0, cfg)
}

/// APGnc with adaptive momentum.
pub fn run_apgnc_plus(obj: &CompositeObjective, x0: &RealVector, cfg: &SolverConfig) -> Result<Trace> {
    if !matches!(cfg.momentum, MomentumSchedule::Adaptive { .. }) {
        return Err(Error::InvalidInput("APGnc+ takes the adaptive schedule".into()));
    }
    if !cfg.grad_error.is_zero() || !cfg.prox_error.is_zero() {
        return Err(Error::InvalidInput("error schedules are only honoured by run_inexact_apgnc".into()));
    }
    apgnc_family(obj, x0, cfg)
}

/// APGnc with gradient errors `e_k` (uniform direction, scheduled magnitude)
/// and ε_k-inexact prox. Works with any of the `None`, `RatioK` and `Adaptive`
/// schedules. The coupling between the error budgets and `‖x_k − y_k‖` is
/// monitored, not enforced.
pub fn run_inexact_apgnc(obj: &CompositeObjective, x0: &RealVector, cfg: &SolverConfig) -> Result<Trace> {
    if cfg.momentum == MomentumSchedule::Nesterov {
        return Err(Error::InvalidInput("inexact APGnc takes none, ratio_k or adaptive momentum".into()));
    }
    if !cfg.prox_error.is_zero() && !obj.nonsmooth().is_convex() {
        return Err(Error::Unsupported("inexact prox requires a convex regularizer".into()));
    }
    let mut trace = apgnc_family(obj, x0, cfg)?;
    if trace.monitor.is_none() {
        trace.monitor = Some(InexactMonitor::default());
    }
    Ok(trace)
}

fn apgnc_family(obj: &CompositeObjective, x0: &RealVector, cfg: &SolverConfig) -> Result<Trace> {
    cfg.momentum.validate_adaptive()?;
    cfg.validate(obj)?;
    let (x_start, f0) = start(obj, x0)?;
    let eta = cfg.step_size;
    let residual_scale = obj.lipschitz() + 1.0 / eta;
    let inexact = !cfg.grad_error.is_zero() || !cfg.prox_error.is_zero();
    let track_perturbation = inexact && obj.nonsmooth().kind() == RegularizerKind::NonNegative;
    let mut grad_rng = rng::seeded(cfg.seed, rng::STREAM_GRADIENT_ERROR);
    let mut prox_rng = rng::seeded(cfg.seed, rng::STREAM_PROX_ERROR);

    let mut adaptive = match cfg.momentum {
        MomentumSchedule::Adaptive { beta0, shrink } => Some(AdaptiveMomentum { beta: beta0, shrink }),
        _ => None,
    };
    let mut y = x_start.clone();
    let mut x_prev = x_start;
    let mut f_y = f0;
    let mut records = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut terminated_by = Termination::MaxIters;
    let mut monitor =
        InexactMonitor { max_perturbation_ratio: track_perturbation.then_some(0.0), ..InexactMonitor::default() };

    for k in 1..=cfg.max_iters {
        let beta = momentum_beta(&cfg.momentum, k, adaptive.map_or(0.0, |a| a.beta))?;

        let mut grad = obj.smooth().gradient(y.view());
        let mut grad_err = 0.0;
        let e_mag = cfg.grad_error.checked(k, 0)?;
        if e_mag > 0.0 {
            let e = rng::unit_vector(&mut grad_rng, grad.len()) * e_mag;
            grad_err = e.dot(&e).sqrt();
            grad += &e;
        }
        let point = forward_point(y.view(), &grad, eta);
        let eps = cfg.prox_error.checked(k, 0)?;
        let (x, gap) = if eps > 0.0 {
            let req = InexactProxRequest::new(eps, cfg.band_floor, prox_rng.next_u64())?;
            let out = inexact_prox(obj.nonsmooth(), point.view(), eta, &req)?;
            if out.exact_fallback {
                monitor.prox_fallbacks += 1;
            }
            (out.point, out.achieved_gap)
        } else {
            (obj.nonsmooth().prox(point.view(), eta), 0.0)
        };

        let f_x = finite_value(obj, x.view(), k)?;
        let step_norm = dist(x.view(), y.view());
        let residual = residual_scale * step_norm;

        let (choice, v) = if beta != 0.0 {
            let mut v = x.clone();
            v.scaled_add(beta, &(&x - &x_prev));
            let f_v = obj.eval(v.view());
            let c = accept_step(f_x, f_v).map_err(|_| diverged(k, "invalid extrapolation"))?;
            (c, Some((v, f_v)))
        } else {
            (StepChoice::Prox, None)
        };
        if let Some(a) = adaptive.as_mut() {
            a.update(choice);
        }

        if inexact && step_norm > 0.0 {
            monitor.max_grad_error_ratio = monitor.max_grad_error_ratio.max(grad_err / step_norm);
            monitor.max_prox_error_ratio = monitor.max_prox_error_ratio.max(gap / (step_norm * step_norm));
            if let Some(m) = monitor.max_perturbation_ratio.as_mut() {
                let g = obj.smooth().gradient(x.view());
                if let Ok(xi) = subdifferential_perturbation_nonneg(g.view(), x.view(), eps) {
                    *m = m.max(xi / step_norm);
                }
            }
        }

        records.push(IterationRecord {
            k,
            f_x,
            f_y,
            step_norm,
            residual,
            beta,
            passes: k as f64,
            chose_extrapolation: choice == StepChoice::Extrapolated,
            eps_realized: gap,
            grad_err_realized: grad_err,
        });

        match (choice, v) {
            (StepChoice::Extrapolated, Some((v, f_v))) => {
                y = v;
                f_y = f_v;
            }
            _ => {
                y = x.clone();
                f_y = f_x;
            }
        }
        x_prev = x;
        if residual <= cfg.residual_tol {
            terminated_by = Termination::Tolerance;
            break;
        }
    }
    finish(records, x_prev, f0, terminated_by, inexact.then_some(monitor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::IsotropicQuadratic;
    use crate::prox::{NonNegative, ZeroRegularizer};

    fn half_square(g: Arc<dyn crate::objective::NonsmoothOracle>) -> CompositeObjective {
        CompositeObjective::new(Arc::new(IsotropicQuadratic::new(1, vec![1.0]).unwrap()), g)
    }

    fn x(v: f64) -> RealVector {
        RealVector::new(vec![v]).unwrap()
    }

    #[test]
    fn ratio_k_values() {
        let s = MomentumSchedule::RatioK;
        assert_eq!(momentum_beta(&s, 0, 0.0).unwrap(), 0.0);
        assert_eq!(momentum_beta(&s, 1, 0.0).unwrap(), 0.25);
        assert_eq!(momentum_beta(&s, 3, 0.0).unwrap(), 0.5);
        assert_eq!(momentum_beta(&MomentumSchedule::None, 7, 0.3).unwrap(), 0.0);
        assert_eq!(momentum_beta(&MomentumSchedule::adaptive_default(), 7, 0.3).unwrap(), 0.3);
        assert!(momentum_beta(&MomentumSchedule::Nesterov, 1, 0.0).is_err());
    }

    #[test]
    fn t_sequence_values() {
        assert_eq!(t_update(0.0), 1.0);
        let golden = (5f64.sqrt() + 1.0) / 2.0;
        assert!((t_update(1.0) - golden).abs() < 1e-15);
        assert!((t_update(golden) - 2.193_527_085_331_054).abs() < 1e-12);
        let mut t = 1.0;
        for k in 1..200 {
            assert!(t >= (k as f64 + 1.0) / 2.0);
            t = t_update(t);
        }
    }

    #[test]
    fn accept_step_rules() {
        assert_eq!(accept_step(1.0, 2.0).unwrap(), StepChoice::Prox);
        assert_eq!(accept_step(2.0, 1.0).unwrap(), StepChoice::Extrapolated);
        assert_eq!(accept_step(1.0, 1.0).unwrap(), StepChoice::Prox);
        assert_eq!(accept_step(1.0, f64::INFINITY).unwrap(), StepChoice::Prox);
        assert!(matches!(accept_step(f64::INFINITY, f64::INFINITY), Err(Error::Diverged { .. })));
    }

    #[test]
    fn adaptive_update_rules() {
        let mut a = AdaptiveMomentum { beta: 0.5, shrink: 0.5 };
        a.update(StepChoice::Prox);
        assert_eq!(a.beta, 0.25);
        let mut a = AdaptiveMomentum { beta: 0.6, shrink: 0.5 };
        a.update(StepChoice::Extrapolated);
        assert_eq!(a.beta, 1.0);
    }

    #[test]
    fn proximal_gradient_contracts_by_half() {
        let obj = half_square(Arc::new(ZeroRegularizer));
        let cfg = SolverConfig::new(0.5, MomentumSchedule::None).max_iters(3);
        let tr = run_proximal_gradient(&obj, &x(1.0), &cfg).unwrap();
        let xs: Vec<f64> = tr.records.iter().map(|r| (2.0 * r.f_x).sqrt()).collect();
        assert_eq!(xs, vec![0.5, 0.25, 0.125]);
        assert_eq!(tr.final_x[0], 0.125);
    }

    #[test]
    fn proximal_gradient_projects_to_minimizer() {
        let obj = half_square(Arc::new(NonNegative));
        let cfg = SolverConfig::new(0.5, MomentumSchedule::None).max_iters(4);
        let tr = run_proximal_gradient(&obj, &x(-1.0), &cfg).unwrap();
        assert_eq!(tr.final_x[0], 0.0);
        assert!(tr.records.iter().all(|r| r.f_x == 0.0));
    }

    #[test]
    fn apg_first_step_matches_proximal_gradient() {
        let obj = half_square(Arc::new(ZeroRegularizer));
        let cfg = SolverConfig::new(0.5, MomentumSchedule::Nesterov).max_iters(1);
        let tr = run_apg(&obj, &x(1.0), &cfg).unwrap();
        assert_eq!(tr.final_x[0], 0.5);
        // y₁ = x₁ because x₁ − x₀ = 0.
        assert_eq!(tr.records[0].f_y, 0.5);
    }

    #[test]
    fn apg_converges_on_convex_quadratic() {
        let f = IsotropicQuadratic::new(2, vec![1.0]).unwrap();
        let obj = CompositeObjective::new(Arc::new(f), Arc::new(ZeroRegularizer));
        let cfg = SolverConfig::new(0.9, MomentumSchedule::Nesterov).max_iters(300);
        let tr = run_apg(&obj, &RealVector::new(vec![1.0, 1.0]).unwrap(), &cfg).unwrap();
        assert!(tr.final_value < 1e-10);
    }

    #[test]
    fn mapg_first_iteration_by_hand() {
        let obj = half_square(Arc::new(ZeroRegularizer));
        let cfg = SolverConfig::new(0.5, MomentumSchedule::Nesterov).max_iters(1);
        let tr = run_mapg(&obj, &x(1.0), &cfg).unwrap();
        assert_eq!(tr.final_x[0], 0.5);
        assert_eq!(tr.records[0].passes, 2.0);
    }

    #[test]
    fn apgnc_hand_simulation() {
        // Independent scalar replay of the APGnc recursion for f = ½x², g = 0, η = ½.
        let (mut y, mut x_prev) = (1.0f64, 1.0f64);
        let mut expected = Vec::new();
        for k in 1..=6 {
            let xk = y - 0.5 * y;
            let beta = k as f64 / (k as f64 + 3.0);
            let v = xk + beta * (xk - x_prev);
            let next = if 0.5 * xk * xk <= 0.5 * v * v { xk } else { v };
            expected.push((xk, next));
            x_prev = xk;
            y = next;
        }
        assert_eq!(expected[0], (0.5, 0.375));
        assert_eq!(expected[1], (0.1875, 0.0625));

        let obj = half_square(Arc::new(ZeroRegularizer));
        let cfg = SolverConfig::new(0.5, MomentumSchedule::RatioK).max_iters(6);
        let tr = run_apgnc(&obj, &x(1.0), &cfg).unwrap();
        for (rec, (xk, _)) in tr.records.iter().zip(&expected) {
            assert_eq!(rec.f_x, 0.5 * xk * xk);
        }
        for (rec, (_, prev_next)) in tr.records.iter().skip(1).zip(&expected) {
            assert_eq!(rec.f_y, 0.5 * prev_next * prev_next);
        }
        assert!(tr.records[0].chose_extrapolation);
    }

    #[test]
    fn apgnc_without_momentum_is_proximal_gradient() {
        let obj = half_square(Arc::new(NonNegative));
        let pg = run_proximal_gradient(&obj, &x(3.0), &SolverConfig::new(0.3, MomentumSchedule::None).max_iters(50))
            .unwrap();
        let nc = run_apgnc(&obj, &x(3.0), &SolverConfig::new(0.3, MomentumSchedule::None).max_iters(50)).unwrap();
        assert!(pg.bitwise_eq(&nc));
    }

    #[test]
    fn schedule_mismatches_are_rejected() {
        let obj = half_square(Arc::new(ZeroRegularizer));
        let ratio = SolverConfig::new(0.5, MomentumSchedule::RatioK);
        assert!(run_proximal_gradient(&obj, &x(1.0), &ratio).is_err());
        assert!(run_apg(&obj, &x(1.0), &ratio).is_err());
        assert!(run_apgnc_plus(&obj, &x(1.0), &ratio).is_err());
        let noisy = ratio.clone().prox_error(ErrorSchedule::Constant(1e-3));
        assert!(run_apgnc(&obj, &x(1.0), &noisy).is_err());
        assert!(run_inexact_apgnc(&obj, &x(1.0), &noisy).is_ok());
        let bad = SolverConfig::new(0.5, MomentumSchedule::Adaptive { beta0: 0.5, shrink: 1.0 });
        assert!(run_apgnc_plus(&obj, &x(1.0), &bad).is_err());
    }

    #[test]
    fn error_schedules() {
        assert_eq!(ErrorSchedule::InverseCubic { scale: 0.01 }.at(1), 0.01);
        assert!((ErrorSchedule::InverseCubic { scale: 0.01 }.at(10) - 1e-5).abs() < 1e-20);
        let capped = ErrorSchedule::CappedInverseCubic { scale: 0.01, cap: 1e-7 };
        assert_eq!(capped.at(0), 1e-7);
        assert!((capped.at(1000) - 1e-11).abs() < 1e-25);
        assert!(ErrorSchedule::InverseCubic { scale: 1.0 }.checked(0, 0).is_err());
    }

    #[test]
    fn tolerance_stops_early() {
        let obj = half_square(Arc::new(ZeroRegularizer));
        let cfg = SolverConfig::new(0.5, MomentumSchedule::RatioK).max_iters(10_000).residual_tol(1e-8);
        let tr = run_apgnc(&obj, &x(1.0), &cfg).unwrap();
        assert_eq!(tr.terminated_by, Termination::Tolerance);
        assert!(tr.records.last().unwrap().residual <= 1e-8);
        assert_eq!(tr.final_value, tr.records.last().unwrap().f_x);
    }
}
