use apgnc_core::checks::{run_checks, run_checks_with, CheckLevel};
use apgnc_core::experiment::{cmd_check, EXIT_OK};
use apgnc_core::{svrg_gradient_estimate, CompositeObjective, Result};
use ndarray::{Array1, ArrayView1};

fn flipped(
    obj: &CompositeObjective,
    x: ArrayView1<f64>,
    snapshot: ArrayView1<f64>,
    g_full: ArrayView1<f64>,
    i: usize,
) -> Result<Array1<f64>> {
    svrg_gradient_estimate(obj, x, snapshot, g_full, i).map(|v| -v)
}

#[test]
fn fast_suite_passes() {
    let results = run_checks(CheckLevel::Fast);
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| (r.name, &r.detail)).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert!(results.len() >= 12);
}

#[test]
fn full_suite_adds_rate_fits() {
    let results = run_checks(CheckLevel::Full);
    for name in ["quadratic_linear_rate", "quartic_power_rate"] {
        let r = results.iter().find(|r| r.name == name).expect(name);
        assert!(r.passed, "{}: {}", r.name, r.detail);
    }
    assert!(results.iter().all(|r| r.passed));
}

#[test]
fn cmd_check_exit_code() {
    assert_eq!(cmd_check(false), EXIT_OK);
}

#[test]
fn sign_flipped_estimator_is_caught() {
    let results = run_checks_with(CheckLevel::Fast, &flipped);
    let unbiased = results.iter().find(|r| r.name == "svrg_unbiasedness").unwrap();
    assert!(!unbiased.passed);
}
