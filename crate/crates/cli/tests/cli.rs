//! End-to-end tests of the `hgs` binary: exit codes, artifact shapes, and
//! byte-level determinism, exercised through a real process boundary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgs"))
        .args(args)
        .output()
        .expect("spawn hgs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn invalid_configurations_exit_with_code_one() {
    // Dimension below three.
    let out = hgs(&["eigen", "--dim", "2"]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    // Odd angular grid.
    let out = hgs(&["eigen", "--dim", "3", "--ntheta", "33"]);
    assert_eq!(out.status.code(), Some(1));
    // Empty epsilon sweep.
    let out = hgs(&["instanton", "--eps", ""]);
    assert_eq!(out.status.code(), Some(1));
    // Zero-point scan.
    let out = hgs(&[
        "scan", "--axis", "lambda", "--from", "1", "--to", "2", "--steps", "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // Unknown flag: usage errors are configuration errors.
    let out = hgs(&["eigen", "--dimension", "3"]);
    assert_eq!(out.status.code(), Some(1));
    // Malformed lambda expression.
    let out = hgs(&["solve", "--lambda", "auto(1.1*mu1)"]);
    assert_eq!(out.status.code(), Some(1));
    // Help is not an error.
    let out = hgs(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn eigen_report_matches_the_dirichlet_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("eigen.json");
    let out = hgs(&[
        "eigen",
        "--dim",
        "3",
        "--nr",
        "128",
        "--ntheta",
        "16",
        "-k",
        "2",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v = read_json(&out_path);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["content_hash"].as_str().unwrap().len(), 64);
    let eigs = v["report"]["eigenvalues"].as_array().unwrap();
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let l1 = eigs[0].as_f64().unwrap();
    assert!((l1 - pi2).abs() / pi2 < 0.01, "lambda1 = {l1}");
    // Second eigenvalue: first angular mode, near the 3/2-order Bessel zero
    // squared (20.1907…).
    let l2 = eigs[1].as_f64().unwrap();
    assert!((l2 - 20.1907).abs() / 20.1907 < 0.02, "lambda2 = {l2}");
    assert_eq!(v["report"]["theta_modes"][1], 1);
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    let out_path = dir.path().join("eigen.json");
    std::fs::write(&cfg_path, "dim = 3\nnr = 32\nntheta = 8\nk = 1\n").unwrap();
    let out = hgs(&[
        "eigen",
        "--config",
        cfg_path.to_str().unwrap(),
        "--nr",
        "48",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v = read_json(&out_path);
    assert_eq!(v["report"]["dim"], 3, "file value applies");
    assert_eq!(v["report"]["nr"], 48, "flag overrides file");
    assert_eq!(v["report"]["ntheta"], 8);
    // Unknown keys in the file are rejected.
    std::fs::write(&cfg_path, "dim = 3\nresolution = 48\n").unwrap();
    let out = hgs(&["eigen", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_reports_are_identical_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> (Value, String) {
        let out_path = dir.path().join(name);
        let out = hgs(&[
            "solve",
            "--dim",
            "5",
            "--nr",
            "48",
            "--ntheta",
            "12",
            "--k-eigs",
            "4",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        let text = std::fs::read_to_string(&out_path).unwrap();
        (serde_json::from_str(&text).unwrap(), text)
    };
    let (v1, text1) = run("a.json");
    let (v2, text2) = run("b.json");
    assert_eq!(v1["content_hash"], v2["content_hash"]);
    assert_eq!(v1["report"], v2["report"]);
    // Byte-identical except the timestamp line.
    let differing: Vec<(&str, &str)> = text1
        .lines()
        .zip(text2.lines())
        .filter(|(a, b)| a != b)
        .collect();
    for (a, _) in &differing {
        assert!(a.contains("\"timestamp\""), "unexpected difference: {a}");
    }
    assert!(differing.len() <= 1);
    // The report certifies the standard m = 1 configuration.
    assert_eq!(v1["report"]["m"], 1);
    assert_eq!(v1["report"]["converged"], true);
    assert_eq!(v1["report"]["changes_sign"], true);
    assert_eq!(v1["report"]["morse"]["index"], 2);
}

#[test]
fn require_m_positive_rejects_sub_lambda1_runs() {
    let out = hgs(&[
        "solve",
        "--dim",
        "5",
        "--nr",
        "48",
        "--ntheta",
        "12",
        "--k-eigs",
        "4",
        "--lambda",
        "auto(0.5*lambda1)",
        "--require-m-positive",
    ]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("require_m_positive"), "stderr: {stderr}");
}
