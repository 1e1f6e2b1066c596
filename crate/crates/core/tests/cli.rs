use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn pencil(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pencil"))
        .args(args)
        .env("PENCIL_THREADS", "2")
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn generate(dir: &Path, family: &str, n: usize, k: usize, m: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("{family}-{n}-{k}-{m}-{seed}.json"));
    let (code, _, err) = pencil(&[
        "generate",
        "--family",
        family,
        "--n",
        &n.to_string(),
        "--k",
        &k.to_string(),
        "--m",
        &m.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "generate failed: {err}");
    path
}

fn read_report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp_unix");
    v
}

#[test]
fn decomposable_tuple_passes_and_splits() {
    let dir = TempDir::new().unwrap();
    let input = generate(dir.path(), "decomposable", 2, 2, 2, 3);
    let report = dir.path().join("analyze.json");
    let (code, _, err) = pencil(&["analyze", input.to_str().unwrap(), "--k", "2", "--out", report.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let v = read_report(&report);
    assert_eq!(v["result"]["overall"], "pass");
    assert_eq!(v["exit_code"], 0);
    assert_eq!(v["input"]["k"], 2);

    let (code, stdout, err) = pencil(&["decompose", input.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["result"]["status"], "pass");
    assert!(v["result"]["decomposition"]["residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(v["result"]["decomposition"]["reduced"].as_array().unwrap().len(), 2);
}

#[test]
fn conjugate_negative_fails_with_exit_one() {
    let dir = TempDir::new().unwrap();
    let input = generate(dir.path(), "conjugate-negative", 3, 2, 2, 1);
    let (code, stdout, _) = pencil(&["analyze", input.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code, 1);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["result"]["overall"], "fail");
    assert!(!v["result"]["failing_words"].as_array().unwrap().is_empty());

    let (code, stdout, _) = pencil(&["decompose", input.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code, 1);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["result"]["error"]["kind"].is_string());
}

#[test]
fn indivisible_dimension_is_a_precondition_violation() {
    let dir = TempDir::new().unwrap();
    let input = generate(dir.path(), "decomposable", 3, 2, 2, 0);
    let (code, stdout, _) = pencil(&["analyze", input.to_str().unwrap(), "--k", "5"]);
    assert_eq!(code, 2);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["result"]["overall"], "precondition_violated");
}

#[test]
fn usage_and_io_errors_exit_three() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.json");
    assert_eq!(pencil(&["generate", "--family", "bogus", "--out", out.to_str().unwrap()]).0, 3);
    assert_eq!(pencil(&["analyze", "/nonexistent/tuple.json", "--k", "2"]).0, 3);
    assert_eq!(pencil(&["frobnicate"]).0, 3);

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{\"version\": \"something-else\"}").unwrap();
    assert_eq!(pencil(&["decompose", garbage.to_str().unwrap(), "--k", "2"]).0, 3);

    let input = generate(dir.path(), "decomposable", 2, 2, 2, 0);
    assert_eq!(pencil(&["analyze", input.to_str().unwrap(), "--k", "2", "--tol", "no_such_tol=1"]).0, 3);
}

#[test]
fn help_and_version_exit_zero() {
    let (code, stdout, _) = pencil(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("analyze"));
    assert_eq!(pencil(&["--version"]).0, 0);
}

#[test]
fn reports_repeat_byte_for_byte_apart_from_the_timestamp() {
    let dir = TempDir::new().unwrap();
    let input = generate(dir.path(), "decomposable", 3, 2, 3, 7);
    let run = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_pencil"))
            .args(["analyze", input.to_str().unwrap(), "--k", "2", "--seed", "11", "--out"])
            .arg(&path)
            .env("PENCIL_THREADS", threads)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        without_timestamp(read_report(&path))
    };
    assert_eq!(run("a.json", "1"), run("b.json", "4"));
}

#[test]
fn generated_files_are_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let pa = generate(a.path(), "commuting", 3, 2, 2, 5);
    let pb = generate(b.path(), "commuting", 3, 2, 2, 5);
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn corollary_counts_monomials_and_caps_blowup() {
    let dir = TempDir::new().unwrap();
    let small = generate(dir.path(), "decomposable", 2, 2, 2, 2);
    let (code, stdout, err) = pencil(&["corollary", small.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["result"]["degree"], 3);
    assert_eq!(v["result"]["monomial_count"], 14);
    assert_eq!(v["result"]["monomials"][0], "A1");

    let large = generate(dir.path(), "decomposable", 4, 2, 3, 2);
    let (code, stdout, _) = pencil(&["corollary", large.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code, 2);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["result"]["error"]["kind"], "MonomialBlowup");
}
