use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polycouple"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.trim_end().lines().count(), 1, "single-line error: {text}");
    serde_json::from_str(text.trim_end()).expect("stderr is JSON")
}

const HEISENBERG: &str = r#"{
  "sigma1": {"dim_out": 1, "n": 1, "terms": [{"l": 0, "m": 1, "coef": [-1.0]}]},
  "sigma2": {"dim_out": 1, "n": 1, "terms": [{"l": 1, "m": 0, "coef": [1.0]}]},
  "w1": 0.3, "w2": -0.7, "n": 1
}"#;

// Gradient of x1 x2: the driven coordinate is a function of the Brownian ones.
const EXACT_FORM: &str = r#"{
  "sigma1": {"dim_out": 1, "n": 1, "terms": [{"l": 0, "m": 1, "coef": [1.0]}]},
  "sigma2": {"dim_out": 1, "n": 1, "terms": [{"l": 1, "m": 0, "coef": [1.0]}]},
  "w1": 0.3, "w2": -0.7, "n": 1
}"#;

#[test]
fn check_phc_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["check-phc", write(dir.path(), "h.json", HEISENBERG).to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["holds"], true);
    assert_eq!(v["rank"], 1);

    let out = run(&["check-phc", write(dir.path(), "e.json", EXACT_FORM).to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let v = stdout_json(&out);
    assert_eq!(v["holds"], false);
    assert_eq!(v["rank"], 0);
}

#[test]
fn missing_config_is_a_config_error() {
    let out = run(&["sweep", "--config", "/nonexistent/missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn unknown_flags_are_rejected_as_json() {
    let out = run(&["sweep", "--bogus", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn help_documents_every_flag() {
    let expect: &[(&str, &[&str])] = &[
        ("check-phc", &["--config"]),
        ("reduce", &["--config"]),
        (
            "couple",
            &[
                "--config",
                "--seed",
                "--R",
                "--dt",
                "--out",
                "--replica",
                "--trace",
                "--strict",
            ],
        ),
        ("sweep", &["--config", "--seed", "--R", "--dt", "--out", "--replicas"]),
        ("oracle", &["--t", "--dt", "--replicas", "--seed", "--halvings"]),
    ];
    for (sub, flags) in expect {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8_lossy(&out.stdout);
        for f in *flags {
            assert!(text.contains(f), "{sub} --help lacks {f}");
        }
    }
}

fn sweep_config(dir: &Path, out: &Path) -> PathBuf {
    let body = format!(
        r#"{{"scenario": {{"kind": "heisenberg"}}, "replicas": 4, "master_seed": 11, "output_path": {:?}}}"#,
        out.to_str().unwrap()
    );
    write(dir, "sweep.json", &body)
}

#[test]
fn sweep_is_byte_identical_and_overrides_win() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let cfg = sweep_config(dir.path(), &a);
    let out = run(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["replicas"], 4);
    let out = run(&["sweep", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let meta: Value = serde_json::from_slice(&fs::read(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);

    let c = dir.path().join("c.csv");
    let out = run(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
        "--replicas",
        "2",
        "--seed",
        "12",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&c).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().ends_with(",12,false"));
}

#[test]
fn couple_traces_cycles_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(dir.path(), &dir.path().join("x.csv"));
    let out = run(&["couple", cfg.to_str().unwrap(), "--trace", "--strict"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["success"], true);
    let cycles = v["cycles"].as_array().unwrap().len();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), cycles);
    for line in stderr.lines() {
        let c: Value = serde_json::from_str(line).unwrap();
        assert!(c["phase_durations"].is_array());
    }
}

#[test]
fn strict_couple_reports_failure_with_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"scenario": {{"kind": "heisenberg"}}, "coupler": {{"R": 4.0, "n": 1, "max_cycles": 1, "tol_couple": 1e-300}},
            "replicas": 1, "master_seed": 3, "output_path": {:?}}}"#,
        dir.path().join("x.csv").to_str().unwrap()
    );
    let cfg = write(dir.path(), "c.json", &body);
    let out = run(&["couple", cfg.to_str().unwrap(), "--strict"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stdout_json(&out)["success"], false);
}

#[test]
fn reduce_solves_heisenberg_start() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
      "sigma1": {"dim_out": 1, "n": 1, "terms": [{"l": 0, "m": 1, "coef": [-1.0]}]},
      "sigma2": {"dim_out": 1, "n": 1, "terms": [{"l": 1, "m": 0, "coef": [1.0]}]},
      "start": {"w1": 0.0, "w2": 0.0, "w3": [1.0]},
      "start_tilde": {"w1": 0.0, "w2": 0.0, "w3": [0.0]},
      "n": 1
    }"#;
    let out = run(&["reduce", write(dir.path(), "r.json", body).to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["verdict"]["holds"], true);
    assert_eq!(v["z3"].as_array().unwrap().len(), 1);
}

#[test]
fn oracle_reports_and_rejects_unknown_names() {
    let out = run(&["oracle", "I10_var", "--replicas", "2000", "--dt", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["analytic"], 0.5);
    let out = run(&["oracle", "I99_var"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}
