//! Smoke tests for the command-line binary: happy paths produce parseable
//! output with exit code 0, usage errors exit 2, numerical failures exit 3.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kdmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdmd"))
        .args(args)
        .output()
        .expect("spawn kdmd")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn simulate_then_fit_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let out = kdmd(&[
        "simulate",
        "--system",
        "lti1a",
        "--seed",
        "3",
        "--snapshots",
        "24",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(csv.exists());

    let fit = kdmd(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--theta",
        "10",
        "--delays",
        "6",
    ]);
    assert_eq!(code(&fit), 0, "stderr: {}", String::from_utf8_lossy(&fit.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 10);
}

#[test]
fn dft_distance_reports_plateau() {
    let out = kdmd(&[
        "dft-distance",
        "--system",
        "lti1a",
        "--theta",
        "10",
        "--delays",
        "6",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["distance"].as_f64().unwrap() > 1e-2);
    assert_eq!(v["equivalent"].as_bool().unwrap(), false);
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = kdmd(&[
        "sweep",
        "--system",
        "lti1a",
        "--theta",
        "2..5",
        "--delays",
        "0,6",
        "--ensemble",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("theta,delays,min,q1,median,q3,max,count"));
    assert_eq!(text.lines().count(), 1 + 4 * 2);
}

#[test]
fn usage_errors_exit_2() {
    // No data source at all.
    let out = kdmd(&["fit", "--theta", "5"]);
    assert_eq!(code(&out), 2);

    // clap-level parse error.
    let out = kdmd(&["fit", "--system", "not-a-system"]);
    assert_eq!(code(&out), 2);

    // Ragged CSV.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("ragged.csv");
    fs::write(&bad, "1,2,3\n4,5\n").unwrap();
    let out = kdmd(&["fit", "--input", bad.to_str().unwrap(), "--theta", "2"]);
    assert_eq!(code(&out), 2, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn numerical_failures_exit_3() {
    // Non-finite samples are a data failure, not a usage failure.
    let dir = tempfile::tempdir().unwrap();
    let nan = dir.path().join("nan.csv");
    fs::write(&nan, "1,2,NaN,4,5,6,7,8\n").unwrap();
    let out = kdmd(&["fit", "--input", nan.to_str().unwrap(), "--theta", "3"]);
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn denoise_noiseless_tls_matches_system_order() {
    let out = kdmd(&[
        "denoise",
        "--system",
        "lti1a",
        "--theta",
        "7",
        "--delays",
        "6",
        "--method",
        "tls",
        "--rank",
        "7",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["model"]["eigenvalues"].as_array().unwrap().len(), 7);
}

#[test]
fn sufficiency_finds_lti_order() {
    let out = kdmd(&[
        "sufficiency",
        "--system",
        "lti1b",
        "--rmax",
        "10",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["lower_bound_on_r"].as_u64().unwrap(), 8);
}

#[test]
fn help_is_available() {
    let out = kdmd(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(Path::new(env!("CARGO_BIN_EXE_kdmd")).exists());
}
