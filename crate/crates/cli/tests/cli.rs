use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn fcpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcpt")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn simulated(dir: &Path, scale: f64) -> PathBuf {
    let spec = write(
        dir,
        "sim.json",
        &format!(r#"{{"n": 120, "m": 21, "change": {{"kind": "amoc", "theta": 0.5}}, "scale": {scale}, "seed": 3}}"#),
    );
    let out = dir.join("data.csv");
    let r = fcpt(&["simulate", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    out
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn detects_strong_change() {
    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path(), 3.0);
    let before = std::fs::read(&data).unwrap();
    for method in ["ff", "wf", "pc"] {
        for h in [None, Some("power:1")] {
            let mut args = vec!["detect", data.to_str().unwrap(), "--method", method, "--mc-reps", "300"];
            if let Some(h) = h {
                args.extend(["--h", h]);
            }
            let out = fcpt(&args);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let v = json(&out);
            assert_eq!(v["test"]["reject"], true, "{method} {h:?}");
            assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
            assert_eq!(v["config"]["seed"], 0);
        }
    }
    assert_eq!(std::fs::read(&data).unwrap(), before);
}

#[test]
fn reports_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path(), 0.3);
    let args = ["detect", data.to_str().unwrap(), "--h", "power:2", "--mc-reps", "200", "--seed", "9"];
    let a = fcpt(&args);
    let b = fcpt(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    // floats carry 17 significant digits
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("\"alpha\": 5.0000000000000003e-2"), "{text}");
}

#[test]
fn constant_data() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "flat.csv", &"2,2,2\n".repeat(10));
    let out = fcpt(&["detect", data.to_str().unwrap(), "--method", "ff", "--mc-reps", "100"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["test"]["statistic"].as_f64(), Some(0.0));
    assert_eq!(v["test"]["pvalue"].as_f64(), Some(1.0));
    let out = fcpt(&["detect", data.to_str().unwrap(), "--method", "wf"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.csv", "1,2\n3,oops\n");
    let out = fcpt(&["detect", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2, column 2"));
    let out = fcpt(&["detect", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = fcpt(&["detect", bad.to_str().unwrap(), "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fcpt(&["detect", bad.to_str().unwrap(), "--method", "xyz"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn grid_header() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "sim.json", r#"{"n": 30, "m": 9, "seed": 1}"#);
    let out = dir.path().join("h.csv");
    let r = fcpt(&["simulate", spec.to_str().unwrap(), "--grid-header", "-o", out.to_str().unwrap()]);
    assert!(r.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert!(text.starts_with("0.0,0.125,"));
    let r = fcpt(&["detect", out.to_str().unwrap(), "--grid-header", "--mc-reps", "100"]);
    assert!(r.status.success());
    assert_eq!(json(&r)["n"], 30);
}

#[test]
fn critical_values() {
    let out = fcpt(&[
        "critvals",
        "--eigenvalues",
        "[1.0]",
        "--method",
        "pc",
        "--num-components",
        "1",
        "--mc-reps",
        "2000",
        "--grid-steps",
        "500",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let rows = v["critical_values"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let c: Vec<f64> = rows.iter().map(|r| r["critical_value"].as_f64().unwrap()).collect();
    assert!(c[0] < c[1] && c[1] < c[2]);
    assert!((c[1] - 1.84).abs() < 0.2);

    let out = fcpt(&["critvals", "--eigenvalues", "[2.0, 1.0]", "--method", "ff", "--format", "csv", "--alpha", "0.05"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("alpha,critical_value"));

    let dir = TempDir::new().unwrap();
    let data = simulated(dir.path(), 0.0);
    let out = fcpt(&["critvals", "--from-data", data.to_str().unwrap(), "--h", "power:1", "--mc-reps", "100"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["family"], "wf_grad");

    assert_eq!(fcpt(&["critvals", "--eigenvalues", "[]"]).status.code(), Some(2));
    assert_eq!(fcpt(&["critvals"]).status.code(), Some(2));
}

#[test]
fn power_study_table() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        dir.path(),
        "study.json",
        r#"{
            "tests": [{"method": "ff"}, {"method": "wf", "h": {"kind": "power_plus", "alpha": 1.0}}],
            "alternatives": [{"kind": "amoc", "theta": 0.5}],
            "scales": [0.0, 2.0],
            "ns": [40],
            "m": 11,
            "noise": {"kind": {"kind": "iid_kl"}, "decay": {"kind": "polynomial", "kappa": 2.0}, "num_terms": 5},
            "reps": 10,
            "mc_reps": 100,
            "seed": 1
        }"#,
    );
    let out = fcpt(&["--threads", "2", "power-study", spec.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("n,alternative,scale,method,h,reps,rejection_rate"));

    let out = fcpt(&["power-study", spec.to_str().unwrap(), "--format", "json"]);
    let v = json(&out);
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);

    let bad = write(dir.path(), "bad.json", r#"{"tests": []}"#);
    assert_eq!(fcpt(&["power-study", bad.to_str().unwrap()]).status.code(), Some(2));
}
