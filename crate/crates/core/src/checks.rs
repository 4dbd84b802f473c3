//! Named invariant suite run by `apgnc check`.

use std::sync::Arc;

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{
    run_apgnc, run_apgnc_plus, run_inexact_apgnc, run_mapg, run_proximal_gradient, t_update, MomentumSchedule,
    SolverConfig,
};
use crate::diagnostics::{
    descent_lemma_check, fit_linear_rate, fit_power_rate, kkt_residual, kkt_residual_nonneg, theorem2_constants,
    trim_for_fit, KLParameters, DEFAULT_TAIL_FRACTION,
};
use crate::error::Result;
use crate::objective::{
    finite_diff_gradient, gradient_lipschitz_ratio, mean_gradient_check, CompositeObjective, NonsmoothOracle,
    RealVector,
};
use crate::problems::{generate_nnpca, nonneg_unit_start, quadratic_problem, quartic_problem, RotatedQuadratic};
use crate::prox::{inexact_prox, prox_gap, prox_objective, InexactProxRequest, L1Norm, NonNegative, NonNegativeBall};
use crate::rng;
use crate::svrg::{run_inexact_svrg_apgnc, run_prox_svrg, run_svrg_apgnc, svrg_gradient_estimate, SvrgConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckLevel {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Signature of [`svrg_gradient_estimate`]; lets tests substitute a faulty one.
pub type Estimator =
    dyn Fn(&CompositeObjective, ArrayView1<f64>, ArrayView1<f64>, ArrayView1<f64>, usize) -> Result<Array1<f64>>;

fn verdict(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn from_result(name: &'static str, r: Result<CheckResult>) -> CheckResult {
    r.unwrap_or_else(|e| verdict(name, false, format!("error: {e}")))
}

fn instances() -> Result<Vec<(&'static str, CompositeObjective)>> {
    Ok(vec![
        ("nnpca", generate_nnpca(60, 12, 1e-3, 1)?.1),
        ("quadratic", quadratic_problem(&[1.0, 2.5, 4.0, 7.0, 10.0], 2)?),
        ("quartic", quartic_problem(4)?),
    ])
}

fn sup(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn check_gradients() -> Result<CheckResult> {
    let mut g = rng::seeded(101, 0);
    let mut worst: f64 = 0.0;
    for (_, obj) in instances()? {
        for _ in 0..20 {
            let x = rng::unit_vector(&mut g, obj.dim()) * 0.8;
            let grad = obj.smooth().gradient(x.view());
            let fd = finite_diff_gradient(&obj, x.view(), 1e-6);
            worst = worst.max(sup(&(&grad - &fd)) / (1.0 + sup(&grad)));
        }
    }
    Ok(verdict("gradient_consistency", worst <= 1e-5, format!("max scaled deviation {worst:.2e}")))
}

fn check_lipschitz() -> Result<CheckResult> {
    let mut g = rng::seeded(102, 0);
    let mut violations = 0;
    for (_, obj) in instances()? {
        for _ in 0..100 {
            let x = rng::unit_vector(&mut g, obj.dim()) * g.random_range(0.0..1.0);
            let y = rng::unit_vector(&mut g, obj.dim()) * g.random_range(0.0..1.0);
            if gradient_lipschitz_ratio(obj.smooth(), x.view(), y.view()) > obj.lipschitz() * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    Ok(verdict("lipschitz_soundness", violations == 0, format!("{violations} violations in 300 pairs")))
}

fn check_finite_sum() -> Result<CheckResult> {
    let mut g = rng::seeded(103, 0);
    let mut worst: f64 = 0.0;
    for (_, obj) in instances()? {
        for _ in 0..5 {
            let x = rng::standard_normal_vector(&mut g, obj.dim());
            let scale = 1.0 + sup(&obj.smooth().gradient(x.view()));
            worst = worst.max(mean_gradient_check(&obj, x.view()) / scale);
        }
    }
    Ok(verdict("finite_sum_consistency", worst <= 1e-12, format!("max relative deviation {worst:.2e}")))
}

fn regularizers() -> Result<Vec<(&'static str, Arc<dyn NonsmoothOracle>)>> {
    Ok(vec![
        ("nonneg", Arc::new(NonNegative)),
        ("ball", Arc::new(NonNegativeBall::new(1.0)?)),
        ("l1", Arc::new(L1Norm::new(0.7)?)),
    ])
}

/// Minimum of the prox objective over a 1e-3 grid around `center` and a coarse
/// grid over `[-3, 3]²`.
fn grid_min(op: &dyn NonsmoothOracle, y: ArrayView1<f64>, eta: f64, center: ArrayView1<f64>) -> f64 {
    let mut best = f64::INFINITY;
    let mut eval = |a: f64, b: f64| {
        let z = Array1::from(vec![a, b]);
        best = best.min(prox_objective(op, z.view(), y, eta));
    };
    for i in -40..=40 {
        for j in -40..=40 {
            eval(center[0] + i as f64 * 1e-3, center[1] + j as f64 * 1e-3);
        }
    }
    for i in -150..=150 {
        for j in -150..=150 {
            eval(i as f64 * 0.02, j as f64 * 0.02);
        }
    }
    best
}

fn check_prox_grid() -> Result<CheckResult> {
    let mut g = rng::seeded(104, 0);
    let mut bad = 0;
    let mut total = 0;
    for (_, op) in regularizers()? {
        for _ in 0..10 {
            let y = rng::standard_normal_vector(&mut g, 2) * 1.5;
            let eta = g.random_range(0.2..1.5);
            let u = op.prox(y.view(), eta);
            let at_u = prox_objective(op.as_ref(), u.view(), y.view(), eta);
            let grid = grid_min(op.as_ref(), y.view(), eta, u.view());
            total += 1;
            if !(op.value(u.view()).is_finite() && at_u <= grid + 1e-12) {
                bad += 1;
            }
        }
    }
    Ok(verdict("prox_grid_optimality", bad == 0, format!("{}/{total} beat or match the grid", total - bad)))
}

fn check_nonexpansive() -> Result<CheckResult> {
    let mut g = rng::seeded(105, 0);
    let mut bad = 0;
    for (_, op) in regularizers()? {
        for _ in 0..100 {
            let a = rng::standard_normal_vector(&mut g, 5);
            let b = rng::standard_normal_vector(&mut g, 5);
            let pa = op.prox(a.view(), 0.7);
            let pb = op.prox(b.view(), 0.7);
            let lhs = (&pa - &pb).dot(&(&pa - &pb)).sqrt();
            let rhs = (&a - &b).dot(&(&a - &b)).sqrt();
            bad += (lhs > rhs * (1.0 + 1e-12)) as usize;
        }
    }
    Ok(verdict("prox_nonexpansive", bad == 0, format!("{bad} violations in 300 pairs")))
}

fn inexact_calls(g: &mut ChaCha8Rng) -> Result<Vec<(Arc<dyn NonsmoothOracle>, Array1<f64>, f64, InexactProxRequest)>> {
    let mut calls = Vec::new();
    let ops: [Arc<dyn NonsmoothOracle>; 2] = [Arc::new(NonNegative), Arc::new(L1Norm::new(1.0)?)];
    for op in ops {
        for eps in [1e-2, 1e-4] {
            for _ in 0..25 {
                let y = rng::standard_normal_vector(g, 3);
                let eta = g.random_range(0.1..2.0);
                let req = InexactProxRequest::new(eps, 0.25, g.random())?;
                calls.push((op.clone(), y, eta, req));
            }
        }
    }
    Ok(calls)
}

fn check_inexact_contract() -> Result<CheckResult> {
    let mut g = rng::seeded(106, 0);
    let calls = inexact_calls(&mut g)?;
    let mut ok = 0;
    for (op, y, eta, req) in &calls {
        let out = inexact_prox(op.as_ref(), y.view(), *eta, req)?;
        let exact = op.prox(y.view(), *eta);
        let gap = prox_gap(op.as_ref(), out.point.view(), exact.view(), y.view(), *eta);
        let eps = req.target_gap();
        if gap <= eps && gap >= req.band_floor() * eps && !out.exact_fallback {
            ok += 1;
        }
    }
    Ok(verdict("inexact_prox_contract", ok == calls.len(), format!("{ok}/{} in band", calls.len())))
}

fn check_inexact_determinism() -> Result<CheckResult> {
    let mut g = rng::seeded(107, 0);
    let calls = inexact_calls(&mut g)?;
    let same = calls.iter().all(|(op, y, eta, req)| {
        let a = inexact_prox(op.as_ref(), y.view(), *eta, req);
        let b = inexact_prox(op.as_ref(), y.view(), *eta, req);
        match (a, b) {
            (Ok(a), Ok(b)) => a.point == b.point && a.achieved_gap.to_bits() == b.achieved_gap.to_bits(),
            _ => false,
        }
    });
    Ok(verdict("inexact_prox_determinism", same, format!("{} repeated calls", calls.len())))
}

fn check_descent_lemma() -> Result<CheckResult> {
    let (_, obj) = generate_nnpca(100, 20, 1e-3, 108)?;
    let eta = 0.5 / obj.lipschitz();
    let mut g = rng::seeded(108, 0);
    let mut held = 0;
    for _ in 0..1000 {
        let y = rng::unit_vector(&mut g, 20).mapv(f64::abs) * g.random_range(0.0..1.0);
        held += descent_lemma_check(&obj, y.view(), eta)?.holds as usize;
    }
    Ok(verdict("descent_lemma", held == 1000, format!("{held}/1000")))
}

fn check_descent_chain() -> Result<CheckResult> {
    let (_, obj) = generate_nnpca(100, 20, 1e-3, 109)?;
    let x0 = nonneg_unit_start(20, 109)?;
    let base = SolverConfig::new(0.05 / obj.lipschitz(), MomentumSchedule::RatioK).max_iters(400);
    let apgnc = run_apgnc(&obj, &x0, &base)?;
    let plus =
        run_apgnc_plus(&obj, &x0, &SolverConfig { momentum: MomentumSchedule::adaptive_default(), ..base.clone() })?;
    let mapg = run_mapg(&obj, &x0, &SolverConfig { momentum: MomentumSchedule::Nesterov, ..base })?;
    let mut bad = 0;
    for tr in [&apgnc, &plus] {
        for w in tr.records.windows(2) {
            // F(y_{k+1}) ≤ F(x_k) ≤ F(y_k)
            if w[1].f_y > w[0].f_x + 1e-10 || w[0].f_x > w[0].f_y + 1e-10 {
                bad += 1;
            }
        }
    }
    let mut prev = mapg.initial_value;
    for r in &mapg.records {
        bad += (r.f_x > prev + 1e-10) as usize;
        prev = r.f_x;
    }
    Ok(verdict("descent_chain", bad == 0, format!("{bad} violations over APGnc, APGnc+, mAPG")))
}

fn check_residual_soundness() -> Result<CheckResult> {
    let obj = quadratic_problem(&[1.0, 3.0, 6.0, 9.0], 110)?;
    let x0 = RealVector::new(vec![0.9, -0.2, 0.4, 0.1])?;
    let cfg = SolverConfig::new(0.5 / obj.lipschitz(), MomentumSchedule::None).max_iters(1);
    let mut x = x0;
    let mut bad = 0;
    for _ in 0..200 {
        let tr = run_proximal_gradient(&obj, &x, &cfg)?;
        let r = &tr.records[0];
        let grad = obj.smooth().gradient(tr.final_x.view());
        let kkt = kkt_residual_nonneg(grad.view(), tr.final_x.view())?;
        bad += (kkt > r.residual + 1e-8) as usize;
        x = tr.final_x;
    }
    Ok(verdict("residual_soundness", bad == 0, format!("{bad} violations in 200 steps")))
}

fn check_t_sequence() -> Result<CheckResult> {
    let mut t = 1.0;
    let mut ok = true;
    for k in 1..=10_000 {
        ok &= t >= (k as f64 + 1.0) / 2.0;
        t = t_update(t);
    }
    Ok(verdict("apg_t_sequence", ok, "t_k >= (k+1)/2 for k <= 10000".into()))
}

/// Exhaustive average of `estimator` over all components equals `∇f(x)`.
pub fn check_svrg_unbiasedness_with(estimator: &Estimator) -> CheckResult {
    from_result(
        "svrg_unbiasedness",
        (|| {
            let (_, obj) = generate_nnpca(10, 20, 1e-3, 111)?;
            let mut g = rng::seeded(111, 0);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let x = rng::standard_normal_vector(&mut g, 20);
                let y = rng::standard_normal_vector(&mut g, 20);
                let gy = obj.smooth().gradient(y.view());
                let mut avg = Array1::<f64>::zeros(20);
                for i in 0..10 {
                    avg += &estimator(&obj, x.view(), y.view(), gy.view(), i)?;
                }
                avg /= 10.0;
                worst = worst.max(sup(&(&avg - &obj.smooth().gradient(x.view()))));
            }
            Ok(verdict("svrg_unbiasedness", worst <= 1e-12, format!("max deviation {worst:.2e}")))
        })(),
    )
}

fn check_snapshot_identity(estimator: &Estimator) -> Result<CheckResult> {
    let (_, obj) = generate_nnpca(10, 20, 1e-3, 112)?;
    let mut g = rng::seeded(112, 0);
    let mut ok = true;
    for _ in 0..20 {
        let y = rng::standard_normal_vector(&mut g, 20);
        let gy = obj.smooth().gradient(y.view());
        for i in 0..10 {
            ok &= estimator(&obj, y.view(), y.view(), gy.view(), i)? == gy;
        }
    }
    Ok(verdict("svrg_snapshot_identity", ok, "estimate equals g_full at the snapshot".into()))
}

fn check_epoch_selection() -> Result<CheckResult> {
    let (_, obj) = generate_nnpca(30, 10, 1e-3, 113)?;
    let x0 = nonneg_unit_start(10, 113)?;
    let tr = run_svrg_apgnc(&obj, &x0, &SvrgConfig::new(30, 12, MomentumSchedule::RatioK).seed(3))?;
    let mut bad = 0;
    for w in tr.records.windows(2) {
        let next = w[1].f_y;
        let ok = if w[0].chose_extrapolation { next < w[0].f_x } else { next == w[0].f_x };
        bad += (!ok) as usize;
    }
    Ok(verdict("svrg_epoch_selection", bad == 0, format!("{bad} epochs violate F(y_k+1) = min(F(x^m), F(z))")))
}

fn check_pass_accounting() -> Result<CheckResult> {
    let (_, obj) = generate_nnpca(40, 10, 1e-3, 114)?;
    let x0 = nonneg_unit_start(10, 114)?;
    let cfg = SolverConfig::new(0.05 / obj.lipschitz(), MomentumSchedule::Nesterov).max_iters(20);
    let mapg = run_mapg(&obj, &x0, &cfg)?;
    let apgnc = run_apgnc(&obj, &x0, &SolverConfig { momentum: MomentumSchedule::RatioK, ..cfg })?;
    let svrg = run_prox_svrg(&obj, &x0, &SvrgConfig::new(10, 8, MomentumSchedule::None))?;
    let ok = mapg.records.iter().all(|r| r.passes == 2.0 * r.k as f64)
        && apgnc.records.iter().all(|r| r.passes == r.k as f64)
        && svrg.records.iter().all(|r| r.passes == (r.k + 1) as f64 * 1.5);
    Ok(verdict("pass_accounting", ok, "mAPG 2/iter, APGnc 1/iter, SVRG 1+2m/n per epoch".into()))
}

fn check_reductions() -> Result<CheckResult> {
    let (_, obj) = generate_nnpca(40, 10, 1e-3, 115)?;
    let x0 = nonneg_unit_start(10, 115)?;
    let none = SolverConfig::new(0.05 / obj.lipschitz(), MomentumSchedule::None).max_iters(150);
    let a = run_apgnc(&obj, &x0, &none)?.bitwise_eq(&run_proximal_gradient(&obj, &x0, &none)?);
    let ratio = SolverConfig { momentum: MomentumSchedule::RatioK, ..none };
    let b = run_inexact_apgnc(&obj, &x0, &ratio)?.bitwise_eq(&run_apgnc(&obj, &x0, &ratio)?);
    let scfg = SvrgConfig::new(40, 6, MomentumSchedule::RatioK).seed(5);
    let c = run_inexact_svrg_apgnc(&obj, &x0, &scfg)?.bitwise_eq(&run_svrg_apgnc(&obj, &x0, &scfg)?);
    Ok(verdict("reduction_identities", a && b && c, format!("beta=0: {a}, zero errors: {b}, svrg eps=0: {c}")))
}

fn check_determinism() -> Result<CheckResult> {
    let (_, obj) = generate_nnpca(40, 10, 1e-3, 116)?;
    let x0 = nonneg_unit_start(10, 116)?;
    let scfg = SvrgConfig::new(40, 5, MomentumSchedule::adaptive_default()).seed(7);
    let a = crate::svrg::run_svrg_apgnc_plus(&obj, &x0, &scfg)?;
    let b = crate::svrg::run_svrg_apgnc_plus(&obj, &x0, &scfg)?;
    let dcfg = SolverConfig::new(0.05 / obj.lipschitz(), MomentumSchedule::RatioK)
        .max_iters(100)
        .prox_error(crate::algorithms::ErrorSchedule::InverseCubic { scale: 0.01 })
        .seed(7);
    let c = run_inexact_apgnc(&obj, &x0, &dcfg)?;
    let d = run_inexact_apgnc(&obj, &x0, &dcfg)?;
    let ok = a.bitwise_eq(&b) && c.bitwise_eq(&d);
    Ok(verdict("determinism", ok, "repeated seeded runs are bit-identical".into()))
}

fn quadratic_rate() -> Result<CheckResult> {
    let eigs: Vec<f64> = (0..20).map(|i| 1.0 + 9.0 * i as f64 / 19.0).collect();
    let obj = quadratic_problem(&eigs, 117)?;
    let x0 = nonneg_unit_start(20, 117)?;
    let eta = 0.05 / obj.lipschitz();
    let tr = run_apgnc(&obj, &x0, &SolverConfig::new(eta, MomentumSchedule::RatioK).max_iters(3000))?;
    let fit = fit_linear_rate(&trim_for_fit(&tr.values(), 0.0), DEFAULT_TAIL_FRACTION)?;
    let lambda_min = RotatedQuadratic::new(&eigs, 117)?.min_eigenvalue();
    let kl = KLParameters::calibrated_quadratic(lambda_min)?;
    let bound = theorem2_constants(obj.lipschitz(), eta, &kl, 1.0)?.linear_contraction(&kl);
    let ok = fit.parameter > 0.0 && fit.parameter < 1.0 && fit.r_squared >= 0.99 && fit.parameter <= bound + 0.05;
    Ok(verdict(
        "quadratic_linear_rate",
        ok,
        format!("rho {:.5} (bound {bound:.5}), R2 {:.5}", fit.parameter, fit.r_squared),
    ))
}

fn quartic_rate() -> Result<CheckResult> {
    let obj = quartic_problem(5)?;
    let x0 = RealVector::new(vec![1.0; 5])?;
    let tr = run_proximal_gradient(
        &obj,
        &x0,
        &SolverConfig::new(0.5 / obj.lipschitz(), MomentumSchedule::None).max_iters(4000),
    )?;
    let fit = fit_power_rate(&trim_for_fit(&tr.values(), 0.0), DEFAULT_TAIL_FRACTION)?;
    Ok(verdict(
        "quartic_power_rate",
        (1.5..=2.5).contains(&fit.parameter),
        format!("exponent {:.4}, R2 {:.5}", fit.parameter, fit.r_squared),
    ))
}

fn nnpca_criticality() -> Result<CheckResult> {
    let (_, obj) = generate_nnpca(200, 50, 1e-3, 2)?;
    let x0 = nonneg_unit_start(50, 1002)?;
    let cfg = SolverConfig::new(0.05 / obj.lipschitz(), MomentumSchedule::RatioK).max_iters(5000).residual_tol(1e-6);
    let tr = run_apgnc(&obj, &x0, &cfg)?;
    let kkt = kkt_residual(&obj, tr.final_x.view())?;
    let res = tr.records.last().map_or(f64::INFINITY, |r| r.residual);
    Ok(verdict(
        "nnpca_criticality",
        kkt <= 1e-6 && res <= 1e-6,
        format!("kkt {kkt:.2e}, residual {res:.2e}, {} iterations", tr.iterations()),
    ))
}

pub fn run_checks(level: CheckLevel) -> Vec<CheckResult> {
    run_checks_with(level, &svrg_gradient_estimate)
}

/// The suite with a caller-supplied SVRG estimator.
pub fn run_checks_with(level: CheckLevel, estimator: &Estimator) -> Vec<CheckResult> {
    let fast: [(&'static str, fn() -> Result<CheckResult>); 15] = [
        ("gradient_consistency", check_gradients),
        ("lipschitz_soundness", check_lipschitz),
        ("finite_sum_consistency", check_finite_sum),
        ("prox_grid_optimality", check_prox_grid),
        ("prox_nonexpansive", check_nonexpansive),
        ("inexact_prox_contract", check_inexact_contract),
        ("inexact_prox_determinism", check_inexact_determinism),
        ("descent_lemma", check_descent_lemma),
        ("descent_chain", check_descent_chain),
        ("residual_soundness", check_residual_soundness),
        ("apg_t_sequence", check_t_sequence),
        ("svrg_epoch_selection", check_epoch_selection),
        ("pass_accounting", check_pass_accounting),
        ("reduction_identities", check_reductions),
        ("determinism", check_determinism),
    ];
    let mut out: Vec<CheckResult> = fast.iter().map(|(n, f)| from_result(n, f())).collect();
    out.push(check_svrg_unbiasedness_with(estimator));
    out.push(from_result("svrg_snapshot_identity", check_snapshot_identity(estimator)));
    if level == CheckLevel::Full {
        let full: [(&'static str, fn() -> Result<CheckResult>); 3] = [
            ("quadratic_linear_rate", quadratic_rate),
            ("quartic_power_rate", quartic_rate),
            ("nnpca_criticality", nnpca_criticality),
        ];
        out.extend(full.iter().map(|(n, f)| from_result(n, f())));
    }
    out
}
