//! Variance-reduced stochastic solvers: proximal SVRG, SVRG-APGnc, SVRG-APGnc
//! with adaptive momentum, and inexact SVRG-APGnc.
//!
//! An epoch takes a full gradient at the snapshot `y_k` (one pass) and `m`
//! inner prox steps with the estimate `∇f_ξ(x) − ∇f_ξ(y_k) + ∇f(y_k)`, each
//! costing two component gradients, for `1 + 2m/n` passes per epoch. Indices
//! `ξ` are drawn uniformly with replacement from `0..n`.

use ndarray::{Array1, ArrayView1};
use rand::{Rng, RngCore};

use crate::algorithms::{accept_step, momentum_beta, AdaptiveMomentum, ErrorSchedule, MomentumSchedule, StepChoice};
use crate::diagnostics::reference_inner_probe;
use crate::error::{Error, Result};
use crate::objective::{dist, CompositeObjective, RealVector};
use crate::prox::{forward_point, inexact_prox, InexactProxRequest, DEFAULT_BAND_FLOOR};
use crate::rng;
use crate::trace::{EpochRecord, InexactMonitor, IterationRecord, Termination, Trace};

#[derive(Debug, Clone)]
pub struct SvrgConfig {
    /// Inner loop length.
    pub m: usize,
    /// Explicit step size; ignored when `rho` is set.
    pub step_size: Option<f64>,
    /// Sets `η = ρ/L`; must be below 1/2.
    pub rho: Option<f64>,
    pub max_epochs: usize,
    pub momentum: MomentumSchedule,
    pub prox_error: ErrorSchedule,
    pub band_floor: f64,
    pub seed: u64,
    /// Compute the realized error budget α each epoch. Costs one extra full
    /// gradient per inner step, which is not counted in the passes.
    pub track_alpha: bool,
}

impl SvrgConfig {
    pub fn new(m: usize, max_epochs: usize, momentum: MomentumSchedule) -> Self {
        SvrgConfig {
            m,
            step_size: None,
            rho: None,
            max_epochs,
            momentum,
            prox_error: ErrorSchedule::Zero,
            band_floor: DEFAULT_BAND_FLOOR,
            seed: 0,
            track_alpha: false,
        }
    }

    pub fn step_size(mut self, eta: f64) -> Self {
        self.step_size = Some(eta);
        self
    }

    pub fn rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
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

    pub fn track_alpha(mut self, on: bool) -> Self {
        self.track_alpha = on;
        self
    }

    /// `ρ/L` if `ρ` is set, else the explicit step, else `1/(8mL)`.
    pub fn resolve_step(&self, lipschitz: f64) -> Result<f64> {
        let eta = match (self.rho, self.step_size) {
            (Some(rho), _) => {
                if !(rho > 0.0 && rho < 0.5) {
                    return Err(Error::InvalidInput(format!("rho must lie in (0, 1/2), got {rho}")));
                }
                rho / lipschitz
            }
            (None, Some(eta)) => eta,
            (None, None) => 1.0 / (8.0 * self.m as f64 * lipschitz),
        };
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {eta}")));
        }
        Ok(eta)
    }

    pub fn passes_per_epoch(&self, n: usize) -> f64 {
        1.0 + 2.0 * self.m as f64 / n as f64
    }
}

/// `∇f_ξ(x) − ∇f_ξ(snapshot) + g_full`, `index` in `0..n`.
pub fn svrg_gradient_estimate(
    obj: &CompositeObjective,
    x: ArrayView1<f64>,
    snapshot: ArrayView1<f64>,
    g_full: ArrayView1<f64>,
    index: usize,
) -> Result<Array1<f64>> {
    let n = obj.n_components();
    if index >= n {
        return Err(Error::IndexOutOfRange { index, n });
    }
    obj.check_dim(x.len())?;
    obj.check_dim(snapshot.len())?;
    obj.check_dim(g_full.len())?;
    let smooth = obj.smooth();
    let mut v = smooth.component_gradient(index, x);
    v -= &smooth.component_gradient(index, snapshot);
    v += &g_full;
    Ok(v)
}

/// Step-size condition `ρ < 1/2` and `c·ρ²m² + ρ ≤ 1`, with `c = 4` for the
/// exact method and `c = 8` for the inexact one.
pub fn check_rho_condition(rho: f64, m: usize, inexact: bool) -> bool {
    if !(rho > 0.0) {
        return false;
    }
    let c = if inexact { 8.0 } else { 4.0 };
    let m = m as f64;
    rho < 0.5 && c * rho * rho * m * m + rho <= 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Variant {
    Plain,
    Momentum,
}

/// Proximal SVRG: the snapshot advances to the last inner iterate.
pub fn run_prox_svrg(obj: &CompositeObjective, x0: &RealVector, cfg: &SvrgConfig) -> Result<Trace> {
    if !cfg.prox_error.is_zero() {
        return Err(Error::InvalidInput("error schedules are only honoured by run_inexact_svrg_apgnc".into()));
    }
    svrg_family(obj, x0, cfg, Variant::Plain)
}

/// SVRG-APGnc with `β_k = k/(k+3)` (or `None` for `β ≡ 0`).
pub fn run_svrg_apgnc(obj: &CompositeObjective, x0: &RealVector, cfg: &SvrgConfig) -> Result<Trace> {
    if !matches!(cfg.momentum, MomentumSchedule::RatioK | MomentumSchedule::None) {
        return Err(Error::InvalidInput("SVRG-APGnc takes the ratio_k schedule".into()));
    }
    if !cfg.prox_error.is_zero() {
        return Err(Error::InvalidInput("error schedules are only honoured by run_inexact_svrg_apgnc".into()));
    }
    svrg_family(obj, x0, cfg, Variant::Momentum)
}

/// SVRG-APGnc with the adaptive momentum update applied at the epoch-level
/// accept/reject. The first epoch extrapolates from `x_{−1}^m := x0`.
pub fn run_svrg_apgnc_plus(obj: &CompositeObjective, x0: &RealVector, cfg: &SvrgConfig) -> Result<Trace> {
    if !matches!(cfg.momentum, MomentumSchedule::Adaptive { .. }) {
        return Err(Error::InvalidInput("SVRG-APGnc+ takes the adaptive schedule".into()));
    }
    if !cfg.prox_error.is_zero() {
        return Err(Error::InvalidInput("error schedules are only honoured by run_inexact_svrg_apgnc".into()));
    }
    svrg_family(obj, x0, cfg, Variant::Momentum)
}

/// SVRG-APGnc whose inner prox is ε_k^t-inexact. Requires a convex regularizer.
pub fn run_inexact_svrg_apgnc(obj: &CompositeObjective, x0: &RealVector, cfg: &SvrgConfig) -> Result<Trace> {
    if !obj.nonsmooth().is_convex() {
        return Err(Error::Unsupported("inexact SVRG-APGnc requires a convex regularizer".into()));
    }
    if cfg.momentum == MomentumSchedule::Nesterov {
        return Err(Error::InvalidInput("inexact SVRG-APGnc takes none, ratio_k or adaptive momentum".into()));
    }
    let mut trace = svrg_family(obj, x0, cfg, Variant::Momentum)?;
    if trace.monitor.is_none() {
        trace.monitor = Some(InexactMonitor::default());
    }
    Ok(trace)
}

fn svrg_family(obj: &CompositeObjective, x0: &RealVector, cfg: &SvrgConfig, variant: Variant) -> Result<Trace> {
    obj.check_dim(x0.dim())?;
    cfg.momentum.validate_adaptive()?;
    if cfg.m == 0 || cfg.max_epochs == 0 {
        return Err(Error::InvalidInput("m and max_epochs must be at least 1".into()));
    }
    if !(cfg.band_floor > 0.0 && cfg.band_floor < 1.0) {
        return Err(Error::InvalidInput("band_floor must lie in (0, 1)".into()));
    }
    let l = obj.lipschitz();
    let eta = cfg.resolve_step(l)?;
    let n = obj.n_components();
    if n == 1 && cfg.m > 1 {
        log::warn!("single-component objective: SVRG sampling is deterministic");
    }
    if 2.0 * cfg.m as f64 * eta * l >= 1.0 {
        log::warn!("step size {eta} is not below 1/(2mL)");
    }
    let inexact = !cfg.prox_error.is_zero();

    let f0 = obj.eval(x0.view());
    if f0.is_nan() || f0 == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(format!("objective at x0 is {f0}")));
    }
    let mut sampler = rng::seeded(cfg.seed, rng::STREAM_SAMPLER);
    let mut prox_rng = rng::seeded(cfg.seed, rng::STREAM_PROX_ERROR);
    let mut adaptive = match cfg.momentum {
        MomentumSchedule::Adaptive { beta0, shrink } => Some(AdaptiveMomentum { beta: beta0, shrink }),
        _ => None,
    };
    let per_epoch = cfg.passes_per_epoch(n);
    let residual_scale = l + 1.0 / eta;

    let mut y = x0.as_array().clone();
    let mut f_y = f0;
    let mut xm_prev = y.clone();
    let mut records = Vec::with_capacity(cfg.max_epochs);
    let mut epochs = Vec::with_capacity(cfg.max_epochs);
    let mut monitor = InexactMonitor::default();

    for k in 0..cfg.max_epochs {
        let g_full = obj.smooth().gradient(y.view());
        let mut x = y.clone();
        let mut inner_step_norms = Vec::with_capacity(cfg.m);
        let mut eps_scheduled_sum = 0.0;
        let mut eps_realized_sum = 0.0;
        let mut alpha_den = 0.0;
        for t in 0..cfg.m {
            let xi = sampler.random_range(0..n);
            let v = svrg_gradient_estimate(obj, x.view(), y.view(), g_full.view(), xi)?;
            let point = forward_point(x.view(), &v, eta);
            let eps = cfg.prox_error.checked(k, t)?;
            if cfg.track_alpha {
                let bar = reference_inner_probe(obj, x.view(), eta);
                let d = dist(bar.view(), x.view());
                alpha_den += d * d;
            }
            let x_next = if eps > 0.0 {
                let req = InexactProxRequest::new(eps, cfg.band_floor, prox_rng.next_u64())?;
                let out = inexact_prox(obj.nonsmooth(), point.view(), eta, &req)?;
                if out.exact_fallback {
                    monitor.prox_fallbacks += 1;
                }
                eps_realized_sum += out.achieved_gap;
                out.point
            } else {
                obj.nonsmooth().prox(point.view(), eta)
            };
            eps_scheduled_sum += eps;
            inner_step_norms.push(dist(x_next.view(), x.view()));
            x = x_next;
        }

        let f_xm = obj.eval(x.view());
        if !f_xm.is_finite() {
            return Err(Error::Diverged {
                iteration: k,
                reason: format!("objective at the epoch's last inner iterate is {f_xm}"),
            });
        }
        let (beta, choice, z) = match variant {
            Variant::Plain => (0.0, StepChoice::Prox, None),
            Variant::Momentum => {
                let beta = momentum_beta(&cfg.momentum, k, adaptive.map_or(0.0, |a| a.beta))?;
                if beta != 0.0 {
                    let mut z = x.clone();
                    z.scaled_add(beta, &(&x - &xm_prev));
                    let f_z = obj.eval(z.view());
                    let c = accept_step(f_xm, f_z)
                        .map_err(|_| Error::Diverged { iteration: k, reason: "invalid extrapolation".into() })?;
                    (beta, c, Some((z, f_z)))
                } else {
                    (0.0, StepChoice::Prox, None)
                }
            }
        };
        if let Some(a) = adaptive.as_mut() {
            if variant == Variant::Momentum {
                a.update(choice);
            }
        }

        let passes = (k + 1) as f64 * per_epoch;
        let step_norm = dist(x.view(), y.view());
        records.push(IterationRecord {
            k,
            f_x: f_xm,
            f_y,
            step_norm,
            residual: residual_scale * step_norm,
            beta,
            passes,
            chose_extrapolation: choice == StepChoice::Extrapolated,
            eps_realized: eps_realized_sum,
            grad_err_realized: 0.0,
        });
        epochs.push(EpochRecord {
            k,
            f_y,
            f_xm,
            inner_step_norms,
            passes,
            chose_extrapolation: choice == StepChoice::Extrapolated,
            eps_scheduled_sum,
            eps_realized_sum,
            realized_alpha: (cfg.track_alpha && alpha_den > 0.0).then(|| 3.0 * eps_scheduled_sum / alpha_den),
        });
        if inexact && step_norm > 0.0 {
            monitor.max_prox_error_ratio = monitor.max_prox_error_ratio.max(eps_realized_sum / (step_norm * step_norm));
        }

        match (choice, z) {
            (StepChoice::Extrapolated, Some((z, f_z))) => {
                y = z;
                f_y = f_z;
            }
            _ => {
                y = x.clone();
                f_y = f_xm;
            }
        }
        xm_prev = x;
    }

    let final_value = records.last().map_or(f0, |r| r.f_x);
    let final_x = RealVector::from_array(xm_prev)
        .map_err(|_| Error::Diverged { iteration: cfg.max_epochs, reason: "final iterate is not finite".into() })?;
    Ok(Trace {
        records,
        final_x,
        final_value,
        initial_value: f0,
        terminated_by: Termination::MaxIters,
        monitor: inexact.then_some(monitor),
        epochs,
    })
}
