//! Proximal gradient methods with momentum for nonconvex composite problems
//! `min F(x) = f(x) + g(x)` with `f = (1/n) Σ f_i` smooth and `g` proximable.
//!
//! Deterministic solvers live in [`algorithms`], variance-reduced stochastic
//! ones in [`svrg`]. [`diagnostics`] measures criticality and convergence
//! rates, [`problems`] builds benchmark instances and [`experiment`] drives
//! config-based runs.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod algorithms;
pub mod checks;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod objective;
pub mod problems;
pub mod prox;
pub mod rng;
pub mod svrg;
pub mod trace;

pub use algorithms::{
    accept_step, momentum_beta, run_apg, run_apgnc, run_apgnc_plus, run_inexact_apgnc, run_mapg, run_proximal_gradient,
    t_update, AdaptiveMomentum, ErrorSchedule, MomentumSchedule, SolverConfig, StepChoice,
};
pub use error::{Error, Result};
pub use objective::{
    eval_objective, finite_diff_gradient, mean_gradient_check, CompositeObjective, NonsmoothOracle, RealVector,
    RegularizerKind, SmoothOracle,
};
pub use svrg::{
    check_rho_condition, run_inexact_svrg_apgnc, run_prox_svrg, run_svrg_apgnc, run_svrg_apgnc_plus,
    svrg_gradient_estimate, SvrgConfig,
};
pub use trace::{EpochRecord, InexactMonitor, IterationRecord, Termination, Trace};
