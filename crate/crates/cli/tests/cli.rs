use std::fs;
use std::path::Path;
use std::process::Command;

fn apgnc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_apgnc"))
}

const CONFIG: &str = "\
[problem]
kind = nnpca
n = 40
d = 10
seed = 5

[solver.apgnc]
[solver.mapg]

[experiment]
seeds = 1, 2
budget = 20
checkpoints = 5
";

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("exp.cfg");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let st = apgnc().arg("run").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    for name in ["apgnc_seed1.csv", "apgnc_seed2.csv", "mapg_seed1.csv", "mapg_seed2.csv", "summary.txt"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let csv = fs::read_to_string(out.join("mapg_seed1.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "solver,seed,k,passes,F_x,F_y,step_norm,residual,beta,chose_extrapolation,eps_realized,grad_err_realized"
    );
    let passes: Vec<f64> = lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(passes.windows(2).all(|w| w[1] - w[0] == 2.0));
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let st = apgnc().arg("run").arg(&cfg).arg("--out").arg(out).status().unwrap();
        assert_eq!(st.code(), Some(0));
    }
    for name in ["apgnc_seed1.csv", "apgnc_seed2.csv", "mapg_seed1.csv", "mapg_seed2.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn seed_override_replaces_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let st = apgnc()
        .args(["run", cfg.to_str().unwrap(), "--seed-override", "7", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(out.join("apgnc_seed7.csv").exists());
    assert!(!out.join("apgnc_seed1.csv").exists());
}

#[test]
fn empty_solver_list_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\nkind = quartic\nd = 3\n");
    let out = apgnc().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn parse_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\nkind = quartic\nd = three\n[solver.pg]\n");
    let out = apgnc().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn compare_needs_two_solvers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\nkind = quartic\nd = 3\n[solver.pg]\n");
    let out = apgnc().arg("compare").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let st = apgnc().arg("compare").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let table = fs::read_to_string(out.join("compare.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert!(header.starts_with("passes,"));
    assert!(header.contains("apgnc_mean") && header.contains("mapg_max"));
}

#[test]
fn check_fast_passes() {
    let out = apgnc().arg("check").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 12);
}

#[test]
fn help_documents_config_keys() {
    let out = apgnc().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["[problem]", "step_scale", "prox_error", "checkpoints", "[output]"] {
        assert!(text.contains(key), "{key}");
    }
}
