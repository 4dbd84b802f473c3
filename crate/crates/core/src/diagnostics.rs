//! Criticality measures, descent-lemma checks, rate fitting and the
//! theoretical rate constants.

use std::fmt;

use ndarray::{Array1, ArrayView1};

use crate::algorithms::{run_mapg, MomentumSchedule, SolverConfig};
use crate::error::{Error, Result};
use crate::objective::{dist, CompositeObjective, RealVector, RegularizerKind};
use crate::prox::prox_gradient_step;

/// `(L + 1/η)·‖y − x‖`, an upper bound on `dist(0, ∂F(x))` when `x` is the
/// prox-gradient step from `y`.
pub fn residual_bound(lipschitz: f64, eta: f64, y: ArrayView1<f64>, x: ArrayView1<f64>) -> f64 {
    (lipschitz + 1.0 / eta) * dist(y, x)
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

/// KKT violation for `g` = indicator of `{x ≥ 0}`: `|grad_i|` on the support,
/// `max(0, −grad_i)` where `x_i = 0`. Zero iff `0 ∈ ∇f(x) + ∂g(x)`.
pub fn kkt_residual_nonneg(grad: ArrayView1<f64>, x: ArrayView1<f64>) -> Result<f64> {
    check_len(x.len(), grad.len())?;
    if x.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidInput("x is outside the nonnegative orthant".into()));
    }
    Ok(nonneg_violation(grad, x, 0.0))
}

fn nonneg_violation(grad: ArrayView1<f64>, x: ArrayView1<f64>, mu: f64) -> f64 {
    grad.iter().zip(x.iter()).fold(0.0, |acc: f64, (&g, &xi)| {
        let v = if xi > 0.0 { (g + mu * xi).abs() } else { (-g).max(0.0) };
        acc.max(v)
    })
}

/// KKT violation for `g` = indicator of `{x ≥ 0, ‖x‖ ≤ R}`. On the sphere the
/// normal cone gains the direction `x`, so the orthant violation of
/// `grad + μx` is minimized over `μ ≥ 0`.
pub fn kkt_residual_nonneg_ball(grad: ArrayView1<f64>, x: ArrayView1<f64>, radius: f64) -> Result<f64> {
    let base = kkt_residual_nonneg(grad, x)?;
    let r = x.dot(&x).sqrt();
    if r > radius * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!("‖x‖ = {r} exceeds radius {radius}")));
    }
    if r < radius * (1.0 - 1e-9) {
        return Ok(base);
    }
    // h(μ) is convex and piecewise linear; every kink lies below `hi`.
    let hi =
        grad.iter().zip(x.iter()).filter(|(_, &xi)| xi > 0.0).map(|(&g, &xi)| (-g / xi).max(0.0)).fold(0.0, f64::max);
    let h = |mu: f64| nonneg_violation(grad, x, mu);
    let (mut a, mut b) = (0.0, hi);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if h(c) <= h(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(h(0.5 * (a + b)).min(base).min(h(hi)))
}

/// `dist(0, ∇f(x) + ∂g(x))` in the max norm for the built-in regularizers,
/// with `∂g` in closed form.
pub fn kkt_residual(obj: &CompositeObjective, x: ArrayView1<f64>) -> Result<f64> {
    obj.check_dim(x.len())?;
    let grad = obj.smooth().gradient(x);
    match obj.nonsmooth().kind() {
        RegularizerKind::Zero => Ok(grad.iter().fold(0.0, |a, g| a.max(g.abs()))),
        RegularizerKind::NonNegative => kkt_residual_nonneg(grad.view(), x),
        RegularizerKind::NonNegativeBall { radius } => kkt_residual_nonneg_ball(grad.view(), x, radius),
        RegularizerKind::L1 { lambda } => Ok(grad.iter().zip(x.iter()).fold(0.0, |acc: f64, (&g, &xi)| {
            let v = if xi != 0.0 { (g + lambda * xi.signum()).abs() } else { (g.abs() - lambda).max(0.0) };
            acc.max(v)
        })),
        RegularizerKind::Other => Err(Error::Unsupported("no closed-form subdifferential for this regularizer".into())),
    }
}

/// Distance from `∂g(x)` to the element `u'` of `∂_ε g(x)` that minimizes
/// `‖grad + u'‖`, for `g` = indicator of `{x ≥ 0}`.
///
/// Here `∂_ε g(x) = {u ≤ 0 : −⟨u, x⟩ ≤ ε}` and the minimizer has the form
/// `u_i = min(0, μx_i − grad_i)` with the multiplier `μ ≥ 0` found by bisection.
pub fn subdifferential_perturbation_nonneg(grad: ArrayView1<f64>, x: ArrayView1<f64>, eps: f64) -> Result<f64> {
    check_len(x.len(), grad.len())?;
    if x.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidInput("x is outside the nonnegative orthant".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidInput(format!("eps must be nonnegative, got {eps}")));
    }
    let u_of = |mu: f64| -> Array1<f64> {
        Array1::from_iter(grad.iter().zip(x.iter()).map(|(&g, &xi)| (mu * xi - g).min(0.0)))
    };
    let slack = |u: &Array1<f64>| -u.dot(&x);
    let mut u = u_of(0.0);
    if slack(&u) > eps {
        let mut hi = 1.0;
        while slack(&u_of(hi)) > eps {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Numerical("multiplier search overflowed".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slack(&u_of(mid)) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        u = u_of(hi);
    }
    Ok(u.iter().zip(x.iter()).filter(|(_, &xi)| xi > 0.0).map(|(&ui, _)| ui * ui).sum::<f64>().sqrt())
}

/// Radius `√(2ηε)` around the exact prox point that contains every ε-prox
/// point of a convex `g`.
pub fn eps_prox_radius(eta: f64, eps: f64) -> f64 {
    (2.0 * eta * eps).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// With `x` the prox-gradient step from `y`: `F(x) ≤ F(y) − (1/(2η) − L/2)‖x − y‖²`.
pub fn descent_lemma_check(obj: &CompositeObjective, y: ArrayView1<f64>, eta: f64) -> Result<DescentReport> {
    obj.check_dim(y.len())?;
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {eta}")));
    }
    let x = prox_gradient_step(obj, y, eta);
    let d = dist(x.view(), y);
    let lhs = obj.eval(x.view());
    let rhs = obj.eval(y) - (1.0 / (2.0 * eta) - obj.lipschitz() / 2.0) * d * d;
    Ok(DescentReport { lhs, rhs, holds: lhs <= rhs + 1e-10 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    Linear,
    Power,
}

impl RateModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateModel::Linear => "linear",
            RateModel::Power => "power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    /// Contraction factor for `Linear`, decay exponent for `Power`.
    pub parameter: f64,
    pub r_squared: f64,
    pub tail_start: usize,
}

pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;
const MIN_FIT_POINTS: usize = 5;

fn tail(r: &[f64], tail_fraction: f64) -> Result<usize> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("tail_fraction must lie in (0, 1], got {tail_fraction}")));
    }
    let len = ((r.len() as f64) * tail_fraction).ceil() as usize;
    if len < MIN_FIT_POINTS {
        return Err(Error::InvalidInput(format!("rate fit needs at least {MIN_FIT_POINTS} tail points, got {len}")));
    }
    let start = r.len() - len;
    if let Some(v) = r[start..].iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("rate fit needs positive values, found {v}")));
    }
    Ok(start)
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (my + slope * (x - mx));
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    (slope, r2)
}

/// Least squares of `log r_k` on `k` over the tail; `parameter = exp(slope)`.
pub fn fit_linear_rate(r: &[f64], tail_fraction: f64) -> Result<RateFit> {
    let start = tail(r, tail_fraction)?;
    let xs: Vec<f64> = (start..r.len()).map(|k| k as f64).collect();
    let ys: Vec<f64> = r[start..].iter().map(|v| v.ln()).collect();
    let (slope, r_squared) = least_squares(&xs, &ys);
    Ok(RateFit { model: RateModel::Linear, parameter: slope.exp(), r_squared, tail_start: start })
}

/// Least squares of `log r_k` on `log k` over the tail, where `r[i]` is taken
/// as `r_{i+1}`; `parameter = −slope`.
pub fn fit_power_rate(r: &[f64], tail_fraction: f64) -> Result<RateFit> {
    let start = tail(r, tail_fraction)?;
    let xs: Vec<f64> = (start..r.len()).map(|i| ((i + 1) as f64).ln()).collect();
    let ys: Vec<f64> = r[start..].iter().map(|v| v.ln()).collect();
    let (slope, r_squared) = least_squares(&xs, &ys);
    Ok(RateFit { model: RateModel::Power, parameter: -slope, r_squared, tail_start: start })
}

/// Suboptimality gaps `F_k − F*`, cut at the first value that is not above
/// `100·ε_mach·|F*|` (below that the gap is rounding noise).
pub fn trim_for_fit(values: &[f64], f_star: f64) -> Vec<f64> {
    let floor = 100.0 * f64::EPSILON * f_star.abs();
    values.iter().map(|v| v - f_star).take_while(|r| *r > floor && r.is_finite()).collect()
}

/// Lowest objective value seen by a long mAPG run (`residual_tol = 1e-12`,
/// `10·budget` iterations).
pub fn estimate_optimal_value(obj: &CompositeObjective, x0: &RealVector, eta: f64, budget: usize) -> Result<f64> {
    let cfg = SolverConfig::new(eta, MomentumSchedule::Nesterov).max_iters(budget.max(1) * 10).residual_tol(1e-12);
    let tr = run_mapg(obj, x0, &cfg)?;
    Ok(tr.records.iter().map(|r| r.f_x).fold(tr.initial_value, f64::min))
}

/// Desingularizer `φ(t) = (c/θ) t^θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KLParameters {
    theta: f64,
    c: f64,
}

impl KLParameters {
    pub fn new(theta: f64, c: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidInput(format!("theta must lie in (0, 1], got {theta}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidInput(format!("c must be positive, got {c}")));
        }
        Ok(KLParameters { theta, c })
    }

    /// `θ = 1/2`, `c = 1/√(2λ_min)`, a calibration for strongly convex
    /// quadratics.
    pub fn calibrated_quadratic(lambda_min: f64) -> Result<Self> {
        if !(lambda_min > 0.0) {
            return Err(Error::InvalidInput("lambda_min must be positive".into()));
        }
        Self::new(0.5, 1.0 / (2.0 * lambda_min).sqrt())
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Constants {
    pub d1: f64,
    pub d2: f64,
}

impl Theorem2Constants {
    /// Contraction factor `c²d₁/(1 + c²d₁)` of the `θ ∈ [1/2, 1)` regime.
    pub fn linear_contraction(&self, kl: &KLParameters) -> f64 {
        let a = kl.c * kl.c * self.d1;
        a / (1.0 + a)
    }
}

fn domain(msg: String) -> Error {
    Error::Domain(msg)
}

/// `d₁ = (1/η + L)²/(1/(2η) − L/2)`; `d₂ = min{1/(2c·d₁), (c/(1−2θ))(2^{(2θ−1)/(2θ−2)} − 1)·r_{k₀}^{2θ−1}}`
/// for `θ < 1/2`, and `1/(2c·d₁)` otherwise.
pub fn theorem2_constants(lipschitz: f64, eta: f64, kl: &KLParameters, r_k0: f64) -> Result<Theorem2Constants> {
    if !(eta > 0.0 && lipschitz > 0.0) {
        return Err(Error::InvalidInput("L and eta must be positive".into()));
    }
    let den = 1.0 / (2.0 * eta) - lipschitz / 2.0;
    if eta * lipschitz >= 1.0 || !(den > 0.0) {
        return Err(domain(format!("eta = {eta} is not below 1/L = {}", 1.0 / lipschitz)));
    }
    let d1 = (1.0 / eta + lipschitz).powi(2) / den;
    let first = 1.0 / (2.0 * kl.c * d1);
    let theta = kl.theta;
    let d2 = if theta < 0.5 {
        if !(r_k0 > 0.0) {
            return Err(Error::InvalidInput("r_k0 must be positive".into()));
        }
        let second = (kl.c / (1.0 - 2.0 * theta))
            * (2f64.powf((2.0 * theta - 1.0) / (2.0 * theta - 2.0)) - 1.0)
            * r_k0.powf(2.0 * theta - 1.0);
        first.min(second)
    } else {
        first
    };
    Ok(Theorem2Constants { d1, d2 })
}

/// `d₁ = (1/η + L + C)²/(1/(2η) − L/2 − C)`, defined for `η < 1/(2C + L)`.
pub fn theorem3_constant(lipschitz: f64, eta: f64, perturbation: f64) -> Result<f64> {
    if !(eta > 0.0 && lipschitz > 0.0 && perturbation >= 0.0) {
        return Err(Error::InvalidInput("L and eta must be positive and C nonnegative".into()));
    }
    let den = 1.0 / (2.0 * eta) - lipschitz / 2.0 - perturbation;
    if eta * (2.0 * perturbation + lipschitz) >= 1.0 || !(den > 0.0) {
        return Err(domain(format!(
            "eta = {eta} is not below 1/(2C + L) = {}",
            1.0 / (2.0 * perturbation + lipschitz)
        )));
    }
    Ok((1.0 / eta + lipschitz + perturbation).powi(2) / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrgConstant {
    pub d: f64,
    /// `d/(d + 1)`.
    pub contraction: f64,
}

/// Exact: `d = (c²(L + 1/η)² + ηL²m)/(1/(2η) − L)`.
/// Inexact with budget `α`: `d = (c²(L + 1/η)² + 2ηL²m + 1/(2η))/(1/(2η) − L − α)`.
pub fn svrg_theoretical_d(lipschitz: f64, eta: f64, m: usize, c: f64, alpha: Option<f64>) -> Result<SvrgConstant> {
    if !(eta > 0.0 && lipschitz > 0.0 && c > 0.0) || m == 0 {
        return Err(Error::InvalidInput("L, eta, c and m must be positive".into()));
    }
    let l = lipschitz;
    let m = m as f64;
    let lead = c * c * (l + 1.0 / eta).powi(2);
    let (num, den) = match alpha {
        None => (lead + eta * l * l * m, 1.0 / (2.0 * eta) - l),
        Some(a) => {
            if !(a >= 0.0) {
                return Err(Error::InvalidInput(format!("alpha must be nonnegative, got {a}")));
            }
            (lead + 2.0 * eta * l * l * m + 1.0 / (2.0 * eta), 1.0 / (2.0 * eta) - l - a)
        }
    };
    if !(den > 0.0) {
        return Err(domain(format!("denominator {den} is not positive")));
    }
    let d = num / den;
    Ok(SvrgConstant { d, contraction: d / (d + 1.0) })
}

/// Full-gradient prox step from `x`, the reference point the SVRG analysis
/// compares each inner step against.
pub fn reference_inner_probe(obj: &CompositeObjective, x: ArrayView1<f64>, eta: f64) -> Array1<f64> {
    prox_gradient_step(obj, x, eta)
}

/// Flat `name=value` report, one metric per line, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsReport {
    entries: Vec<(String, String)>,
}

impl DiagnosticsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((name.into(), value.to_string()));
    }

    /// Floats are written with 17 significant digits.
    pub fn push_f64(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, format_f64(value));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(|v| v.parse().ok())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: i + 1, message: "expected name=value".into() })?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(DiagnosticsReport { entries })
    }
}

/// 17 significant digits in scientific notation; non-finite values as
/// `inf`, `-inf`, `NaN`.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn residual_bound_examples() {
        let y = array![0.1];
        let x = array![0.0];
        assert!((residual_bound(2.0, 0.25, y.view(), x.view()) - 0.6).abs() < 1e-15);
        assert_eq!(residual_bound(2.0, 0.25, x.view(), x.view()), 0.0);
        assert_eq!(residual_bound(1.0, 0.5, array![1.0].view(), x.view()), 3.0);
    }

    #[test]
    fn kkt_examples() {
        let r = |g: [f64; 2], x: [f64; 2]| kkt_residual_nonneg(array![g[0], g[1]].view(), array![x[0], x[1]].view());
        assert_eq!(r([-0.5, 1.0], [2.0, 0.0]).unwrap(), 0.5);
        assert_eq!(r([0.0, -0.3], [0.0, 0.0]).unwrap(), 0.3);
        assert_eq!(r([0.0, 5.0], [1.0, 0.0]).unwrap(), 0.0);
        assert!(r([0.0, 0.0], [-1.0, 0.0]).is_err());
    }

    #[test]
    fn kkt_ball_uses_normal_direction() {
        // On the sphere, grad = −2x is cancelled by μ = 2.
        let x = array![0.6, 0.8];
        let g = array![-1.2, -1.6];
        assert!(kkt_residual_nonneg_ball(g.view(), x.view(), 1.0).unwrap() < 1e-12);
        // Inside the ball the orthant measure applies unchanged.
        let xi = array![0.3, 0.4];
        assert_eq!(kkt_residual_nonneg_ball(g.view(), xi.view(), 1.0).unwrap(), 1.6);
    }

    #[test]
    fn perturbation_cases() {
        // u' = −grad is already in ∂g(x) when grad vanishes on the support.
        let p = subdifferential_perturbation_nonneg(array![0.0, 1.0].view(), array![1.0, 0.0].view(), 0.0).unwrap();
        assert_eq!(p, 0.0);
        // grad = (1) at x = (2): u' = min(0, 2μ − 1) with −2u' ≤ ε, so u' = −ε/2.
        let p = subdifferential_perturbation_nonneg(array![1.0].view(), array![2.0].view(), 0.1).unwrap();
        assert!((p - 0.05).abs() < 1e-12);
    }

    #[test]
    fn rate_fits_exact() {
        let geo: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
        let f = fit_linear_rate(&geo, 0.5).unwrap();
        assert!((f.parameter - 0.5).abs() < 1e-10 && (f.r_squared - 1.0).abs() < 1e-12);
        let pw: Vec<f64> = (1..=50).map(|k| (k as f64).powi(-2)).collect();
        let f = fit_power_rate(&pw, 0.5).unwrap();
        assert!((f.parameter - 2.0).abs() < 1e-10);
        assert!(fit_linear_rate(&[1.0, 0.5, 0.0, 0.1, 0.2, 0.3], 1.0).is_err());
        assert!(fit_linear_rate(&[1.0; 4], 1.0).is_err());
    }

    #[test]
    fn report_roundtrip() {
        let mut r = DiagnosticsReport::new();
        r.push_f64("final_F", -0.125);
        r.push("solver", "apgnc");
        let back = DiagnosticsReport::parse(&r.to_text()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get_f64("final_F"), Some(-0.125));
    }
}
