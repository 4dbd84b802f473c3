//! Per-iteration records produced by every solver.

use crate::objective::RealVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    MaxIters,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::MaxIters => "max_iters",
        }
    }
}

/// One outer iteration (one epoch for the SVRG solvers).
///
/// `f_x` is the objective at the point the iteration produced and `f_y` the
/// objective at the point it started from, so for the APGnc family the chain
/// `f_y[k+1] ≤ f_x[k] ≤ f_y[k]` is the descent property.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub f_x: f64,
    pub f_y: f64,
    pub step_norm: f64,
    /// `(L + 1/η)·step_norm`, an upper bound on `dist(0, ∂F)` at the new point.
    pub residual: f64,
    pub beta: f64,
    /// Cumulative effective passes over the `n` samples.
    pub passes: f64,
    pub chose_extrapolation: bool,
    pub eps_realized: f64,
    pub grad_err_realized: f64,
}

/// Per-epoch quantities of the SVRG solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub k: usize,
    pub f_y: f64,
    pub f_xm: f64,
    pub inner_step_norms: Vec<f64>,
    pub passes: f64,
    pub chose_extrapolation: bool,
    pub eps_scheduled_sum: f64,
    pub eps_realized_sum: f64,
    /// `3 Σ_t ε_k^t / Σ_t ‖x̄_k^{t+1} − x_k^t‖²`, only when alpha tracking is on.
    pub realized_alpha: Option<f64>,
}

/// Post-hoc view of the inexactness of a run, relative to `‖x_k − y_k‖`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InexactMonitor {
    /// `max_k ‖e_k‖ / ‖x_k − y_k‖`.
    pub max_grad_error_ratio: f64,
    /// `max_k ε_k / ‖x_k − y_k‖²`, with the realized gap as `ε_k`.
    pub max_prox_error_ratio: f64,
    /// `max_k ξ_k / ‖x_k − y_k‖`; only computed for the nonnegative orthant.
    pub max_perturbation_ratio: Option<f64>,
    /// Inexact prox calls that fell back to the exact point.
    pub prox_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
    pub final_x: RealVector,
    /// Equals the last record's `f_x`.
    pub final_value: f64,
    pub initial_value: f64,
    pub terminated_by: Termination,
    pub monitor: Option<InexactMonitor>,
    pub epochs: Vec<EpochRecord>,
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn passes(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.passes)
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f_x).collect()
    }

    /// Exact equality of every float by bit pattern.
    pub fn bitwise_eq(&self, other: &Trace) -> bool {
        fn same(a: f64, b: f64) -> bool {
            a.to_bits() == b.to_bits()
        }
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.k == b.k
                    && same(a.f_x, b.f_x)
                    && same(a.f_y, b.f_y)
                    && same(a.step_norm, b.step_norm)
                    && same(a.residual, b.residual)
                    && same(a.beta, b.beta)
                    && same(a.passes, b.passes)
                    && a.chose_extrapolation == b.chose_extrapolation
                    && same(a.eps_realized, b.eps_realized)
                    && same(a.grad_err_realized, b.grad_err_realized)
            })
            && self.final_x.len() == other.final_x.len()
            && self.final_x.iter().zip(other.final_x.iter()).all(|(a, b)| same(*a, *b))
            && same(self.final_value, other.final_value)
            && same(self.initial_value, other.initial_value)
            && self.terminated_by == other.terminated_by
    }
}
