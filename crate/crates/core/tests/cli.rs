use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_thetanormal"));
    c.env_remove("THETANORMAL_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut a = args.to_vec();
    a.extend(["--json", "-"]);
    let out = run(&a);
    let v = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    });
    (out.status.code().unwrap(), v)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn sample_tau_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let out = run(&["sample-tau", "--g", "2", "--seed", "42", "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(read(&a), read(&b));
    let v: Value = serde_json::from_slice(&read(&a)).unwrap();
    assert_eq!(v["g"], 2);
    assert_eq!(v["re"][0][1], v["re"][1][0]);
    assert_eq!(v["im"][0][1], v["im"][1][0]);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["sample-tau", "--g", "0"]).status.code(), Some(1));
    assert_eq!(run(&["check", "--g", "2"]).status.code(), Some(1));
    assert_eq!(run(&["check", "--g", "2", "--type", "1,2,3"]).status.code(), Some(1));
    assert_eq!(run(&["check", "--g", "1", "--type", "3", "--rank-tol", "2"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_tau_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tau.json");
    std::fs::write(&p, "{\"g\": 1,\n \"re\": [[0.0]],\n \"im\": oops}").unwrap();
    let out = run(&["check", "--g", "1", "--type", "3", "--tau", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn check_with_tau_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tau.json");
    run(&["sample-tau", "--g", "1", "--seed", "3", "--out", p.to_str().unwrap()]);
    let (code, v) = json(&["check", "--g", "1", "--type", "3", "--tau", p.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["two_normal"], true);
    assert!(v["tau_source"].as_str().unwrap().starts_with("file:"));
}

#[test]
fn check_examples() {
    let (code, v) = json(&["check", "--g", "2", "--type", "1,9", "--seed", "11"]);
    assert_eq!(code, 0);
    assert_eq!(v["status"], "verdict");
    assert_eq!(v["bound"]["holds"], true);
    assert_eq!(v["two_normal"], true);
    assert_eq!(v["dim_I2"], 9);

    let (code, v) = json(&["check", "--g", "1", "--type", "2", "--seed", "1"]);
    assert_eq!(code, 0);
    assert_eq!(v["bound"]["holds"], false);
    assert_eq!(v["two_normal"], false);
    assert_eq!(v["rank"]["value"], 3);

    let (code, v) = json(&["check", "--g", "2", "--type", "2,4", "--seed", "5"]);
    assert_eq!(code, 0);
    assert_eq!(v["two_normal"], false);
}

#[test]
fn human_summary_moves_to_stderr_when_streaming_json() {
    let out = run(&["check", "--g", "1", "--type", "3", "--json", "-"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("2-normal"));
    let out = run(&["check", "--g", "1", "--type", "3"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("2-normal"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["check", "--g", "1", "--type", "3"])
        .env("THETANORMAL_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&read(&dir.path().join("check-report.json"))).unwrap();
    assert_eq!(v["two_normal"], true);
}

#[test]
fn check_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let out = run(&["check", "--g", "2", "--type", "1,9", "--seed", "4", "--r", "2,3", "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(read(&a), read(&b));
}

#[test]
fn inconclusive_exits_two() {
    // A rank threshold inside the noise floor cannot separate signal from noise.
    let out = run(&["check", "--g", "2", "--type", "1,9", "--seed", "0", "--rank-tol", "1e-17"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn span_examples() {
    let (code, v) = json(&["span", "--g", "1", "--level", "2", "--subgroup", "1/3"]);
    assert_eq!(code, 0);
    assert_eq!(v["spanning"], true);
    assert_eq!(v["subgroup_order"], 3);

    let (code, v) = json(&["span", "--g", "1", "--level", "2", "--subgroup", "1/2"]);
    assert_eq!(code, 0);
    assert_eq!(v["hypothesis"]["holds"], false);
    assert_eq!(v["out_of_hypothesis"], true);

    let (code, v) = json(&["span", "--g", "2", "--type", "1,9", "--subgroup-dual"]);
    assert_eq!(code, 0);
    assert_eq!(v["spanning_all"], true);
    assert_eq!(v["sigma"].as_array().unwrap().len(), 9);
}

#[test]
fn span_rejects_non_torsion_generators() {
    assert_eq!(run(&["span", "--g", "1", "--subgroup", "0.3"]).status.code(), Some(1));
    assert_eq!(run(&["span", "--g", "1"]).status.code(), Some(1));
}
