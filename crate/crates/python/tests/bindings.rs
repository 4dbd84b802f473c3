use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &str) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(apgnc::apgnc)(py);
        let globals = PyDict::new(py);
        globals.set_item("apgnc", module).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            panic!("{e}");
        }
    });
}

#[test]
fn scalar_helpers() {
    run(r#"
assert apgnc.accept_step(1.0, 1.0) == "prox"
assert apgnc.prox_l1([3.0, -0.5], 1.0, 1.0) == [2.0, 0.0]
assert abs(apgnc.t_update(1.0) - 1.618033988749895) < 1e-12
assert not apgnc.check_rho_condition(0.25, 2, False)
"#);
}

#[test]
fn nnpca_run_roundtrip() {
    run(r#"
obj = apgnc.Objective.nnpca(40, 10, seed=5)
x0 = apgnc.nonneg_unit_start(10, 1)
tr = apgnc.solve(obj, x0, "apgnc_plus", budget=50)
assert len(tr) == 50 and tr.passes[-1] == 50.0
assert tr.final_value == tr.f_x[-1] <= tr.initial_value
"#);
}

#[test]
fn errors_map_to_python_exceptions() {
    run(r#"
obj = apgnc.Objective.quartic(3)
for call, exc in [
    (lambda: obj.svrg_gradient_estimate([1.0] * 3, [1.0] * 3, [0.0] * 3, 3), IndexError),
    (lambda: obj.gradient([1.0, 2.0]), ValueError),
    (lambda: apgnc.solve(obj, [1.0] * 3, "newton"), ValueError),
    (lambda: apgnc.solve(obj, [1.0] * 3, "inexact_apgnc", prox_error="bogus"), ValueError),
]:
    try:
        call()
    except exc:
        pass
    else:
        raise AssertionError(exc)
"#);
}
