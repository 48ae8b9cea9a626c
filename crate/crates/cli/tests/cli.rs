use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use horizon_core::csvfmt;

const DIVERGENT: &str = "state_dim = 1\ncontrol_dim = 1\ndynamics = [\"0*u1\"]\npayoff = \"x1\"\nx0 = [1.0]\n\
                         reference = [\"0\"]\n[control]\nkind = \"box\"\nlower = [-1]\nupper = [1]\n";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horizon-pmp"))
        .args(args)
        .env_remove("HORIZON_PMP_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn summary_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("summary.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap_or_else(|| panic!("no `{key}` in summary:\n{text}"))
}

fn bracketed(v: &str) -> f64 {
    v.trim_matches(|c| c == '[' || c == ']').parse().unwrap()
}

#[test]
fn list_prints_the_catalog() {
    let o = run(&["list"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = out.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["scalar-exp", "halkin", "lq-discounted", "monotone-growth"]);
    assert!(out.lines().all(|l| l.len() > 17 && l.as_bytes()[16] == b' '));

    let o = run(&["list", "--json"]);
    assert_eq!(code(&o), 0);
    let items: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let items = items.as_array().unwrap();
    assert_eq!(items.len(), 4);
    assert_eq!(items[1]["name"], "halkin");
    assert!(items.iter().all(|i| i["description"].as_str().is_some_and(|d| !d.is_empty())));
}

#[test]
fn usage_errors_exit_with_one() {
    let o = run(&["--bogus", "list"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--bogus"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["solve", "--out", out])), 1, "neither --problem nor --builtin");
    assert_eq!(code(&run(&["solve", "--builtin", "ramsey", "--out", out])), 1);
    assert_eq!(code(&run(&["solve", "--builtin", "halkin", "--atol", "-1", "--out", out])), 1);

    let o = run(&["adjoint", "--problem", "/nonexistent/problem.toml", "--out", out]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("problem.toml"));
}

#[test]
fn thread_count_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_horizon-pmp"))
        .arg("list")
        .env("HORIZON_PMP_THREADS", "abc")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    let o = Command::new(env!("CARGO_BIN_EXE_horizon-pmp"))
        .arg("list")
        .env("HORIZON_PMP_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn solve_writes_one_row_per_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", "--builtin", "halkin", "--tau", "5,10,20", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csvfmt::parse(&fs::read_to_string(dir.path().join("truncation.csv")).unwrap()).unwrap();
    assert_eq!(header[..4], ["n", "tau_n", "gamma_n", "lambda_n"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r[1]).collect::<Vec<_>>(), [5.0, 10.0, 20.0]);
    let lambda: f64 = summary_value(dir.path(), "lambda").parse().unwrap();
    assert!((lambda - 0.5).abs() < 1e-6, "{lambda}");
    assert_eq!(summary_value(dir.path(), "converged"), "true");

    let (_, psi) = csvfmt::parse(&fs::read_to_string(dir.path().join("extremal_psi.csv")).unwrap()).unwrap();
    assert_eq!(psi.last().unwrap()[0], 20.0);
    assert_eq!(psi.last().unwrap()[1], 0.0);
    assert!(dir.path().join("extremal_x.csv").exists());
}

#[test]
fn adjoint_reports_the_cauchy_multiplier() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["adjoint", "--builtin", "scalar-exp", "--t-out", "10", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary_value(dir.path(), "verdict"), "converged");
    let lambda: f64 = summary_value(dir.path(), "lambda0").parse().unwrap();
    assert!((lambda - 0.5).abs() < 1e-8);
    assert!((bracketed(&summary_value(dir.path(), "i_star")) - 1.0).abs() < 1e-8);
    let (header, rows) = csvfmt::parse(&fs::read_to_string(dir.path().join("psi_cauchy.csv")).unwrap()).unwrap();
    assert_eq!(header, ["t", "psi_1", "psi_unit_1"]);
    assert_eq!(rows.last().unwrap()[0], 10.0);
    for r in &rows {
        assert!((r[2] - (-r[0]).exp()).abs() < 1e-6, "t={}", r[0]);
    }
    assert!(dir.path().join("I_accumulated.csv").exists());
}

#[test]
fn divergent_integral_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("div.toml");
    fs::write(&problem, DIVERGENT).unwrap();
    let out = dir.path().join("out");
    let o = run(&["adjoint", "--problem", problem.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(summary_value(&out, "verdict"), "diverged");
    assert!(!out.join("psi_cauchy.csv").exists());
}

#[test]
fn check_separates_halkin_from_the_normal_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["check", "--builtin", "halkin", "--out", out]);
    assert_eq!(code(&o), 0);
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.contains("trans=fails") && line.contains("lim=holds"), "{line}");
    assert!(dir.path().join("transversality.txt").exists());
    assert!(dir.path().join("evidence_trans.csv").exists());

    let o = run(&["check", "--builtin", "scalar-exp", "--out", out]);
    assert_eq!(code(&o), 0);
    let line = String::from_utf8(o.stdout).unwrap();
    for pair in line.trim().split(';') {
        assert!(pair.ends_with("=holds"), "{line}");
    }
}

#[test]
fn check_accepts_an_external_adjoint_and_rejects_a_corrupt_one() {
    let dir = tempfile::tempdir().unwrap();
    let adj = dir.path().join("adj");
    let o = run(&["adjoint", "--builtin", "halkin", "--out", adj.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let psi = adj.join("psi_cauchy.csv");
    let out = dir.path().join("chk");
    let o = run(&["check", "--builtin", "halkin", "--psi", psi.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("trans=fails"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,psi_1\n0.0,0.5\n1.0,oops\n").unwrap();
    let o = run(&["check", "--builtin", "halkin", "--psi", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("oops"));
}

#[test]
fn sweep_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["sweep", "--builtin", "halkin", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let probe = fs::read_to_string(dir.path().join("probe.csv")).unwrap();
    let mut lines = probe.lines();
    assert_eq!(lines.next(), Some("radius,d_1,sup_diff,status"));
    assert!(lines.all(|l| l.ends_with(",ok")), "{probe}");
    let abn: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("abnormality.json")).unwrap()).unwrap();
    assert!(abn.is_object());
    assert_eq!(summary_value(dir.path(), "command"), "sweep");
}
