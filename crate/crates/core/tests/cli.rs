use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use stlct_phase::measurement::{read_dataset, sample_exact};
use stlct_phase::signal::GaussianSisSignal;

const BIN: &str = env!("CARGO_BIN_EXE_stlct");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn stlct(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("STLCT_OUT_DIR").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Reduced config with one field replaced.
fn patched(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(config("reduced.json")).unwrap()).unwrap();
    edit(&mut v);
    let p = dir.join("patched.json");
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

#[test]
fn simulate_and_reconstruct_reduced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reduced.json");
    let out = dir.path().join("a");
    let o = stlct(&["simulate", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (m, _) = read_dataset(&out.join("dataset.bin")).unwrap();
    assert_eq!(m.values.dim(), (41, 801));

    let o = stlct(&["reconstruct", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["anchors.csv", "detector.csv", "reconstruction.csv", "report.json", "timings.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(out.join("reconstruction.csv")).unwrap();
    assert!(header.starts_with("t,re_f,re_r,im_f,im_r"));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["J"].as_u64().unwrap() >= 2);
    assert!(report["error"]["optimized"].as_f64().unwrap() < 0.5);
    assert!(report.get("timings").is_none());

    // same config and seed give byte-identical outputs
    let again = dir.path().join("b");
    assert_eq!(code(&stlct(&["experiment", "--config", path(&cfg), "--out", path(&again)])), 0);
    for f in ["dataset.bin", "anchors.csv", "detector.csv", "reconstruction.csv", "report.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    // a different noise seed changes the data
    let other = dir.path().join("c");
    let args = ["simulate", "--config", path(&cfg), "--out", path(&other), "--seed", "8"];
    assert_eq!(code(&stlct(&args)), 0);
    assert_ne!(fs::read(out.join("dataset.bin")).unwrap(), fs::read(other.join("dataset.bin")).unwrap());
}

#[test]
fn reconstruct_without_truth_has_no_error_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reduced.json");
    let out = dir.path();
    assert_eq!(code(&stlct(&["simulate", "--config", path(&cfg), "--out", path(out)])), 0);
    fs::remove_file(out.join("signal.json")).unwrap();
    assert_eq!(code(&stlct(&["reconstruct", "--config", path(&cfg), "--out", path(out)])), 0);
    let text = fs::read_to_string(out.join("reconstruction.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,re_r,im_r"));
    let detector = fs::read_to_string(out.join("detector.csv")).unwrap();
    assert_eq!(detector.lines().next(), Some("t,A"));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["error"].is_null());
}

#[test]
fn bounds_reports() {
    let dir = tempfile::tempdir().unwrap();
    let full = config("full.json");
    let out = dir.path().join("full");
    let o = stlct(&["bounds", "--config", path(&full), "--out", path(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--full"));

    let o = stlct(&["bounds", "--config", path(&full), "--out", path(&out), "--full"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("leading N term = 82, leading H term = 1440"), "{stdout}");
    let b: Value = serde_json::from_str(&fs::read_to_string(out.join("bounds.json")).unwrap()).unwrap();
    assert_eq!(b["leading_n"], 82);
    assert_eq!(b["leading_h"], 1440);

    let gout = dir.path().join("gabor");
    let o = stlct(&["bounds", "--config", path(&config("gabor.json")), "--out", path(&gout)]);
    let b: Value = serde_json::from_str(&fs::read_to_string(gout.join("bounds.json")).unwrap()).unwrap();
    assert_eq!(b["leading_h_vanishes"], true);
    assert!(String::from_utf8_lossy(&o.stdout).contains("note:"));
}

#[test]
fn infeasible_tolerance_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), |v| {
        let o = v.as_object_mut().unwrap();
        o.remove("lattice");
        o.insert("epsilon".into(), Value::from(0.18));
        o["algorithm"] = serde_json::json!({ "s": 5.0, "r": 1.5, "gamma": 0.3 });
    });
    let o = stlct(&["bounds", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn anchor_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), |v| v["algorithm"]["gamma_tilde"] = Value::from(1e6));
    let out = dir.path().join("out");
    assert_eq!(code(&stlct(&["simulate", "--config", path(&cfg), "--out", path(&out)])), 0);
    let o = stlct(&["reconstruct", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), |v| v["unknown_key"] = Value::from(1));
    assert_eq!(code(&stlct(&["simulate", "--config", path(&cfg), "--out", path(dir.path())])), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&stlct(&["simulate", "--config", path(&missing)])), 2);
    assert_eq!(code(&stlct(&["verify", "--suite", "nonsense", "--out", path(dir.path())])), 2);
}

#[test]
fn verify_suites() {
    let dir = tempfile::tempdir().unwrap();
    let o = stlct(&["verify", "--suite", "stability", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["suites"].as_array().unwrap().len(), 1);
    assert_eq!(v["suites"][0]["name"], "stability");
    assert_eq!(v["pass"], true);
}

#[test]
fn corrupted_dataset_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reduced.json");
    let out = dir.path();
    assert_eq!(code(&stlct(&["simulate", "--config", path(&cfg), "--out", path(out)])), 0);
    let ok = stlct(&["verify", "--config", path(&cfg), "--out", path(out), "--suite", "dataset"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));

    let file = out.join("dataset.bin");
    let (m, _) = read_dataset(&file).unwrap();
    let largest = m.values.iter().fold(f64::MIN, |a, &v| a.max(v));
    let mut bytes = fs::read(&file).unwrap();
    let needle = largest.to_le_bytes();
    let at = bytes.windows(8).position(|w| w == needle).unwrap();
    bytes[at + 7] ^= 0x80;
    fs::write(&file, &bytes).unwrap();

    let o = stlct(&["verify", "--config", path(&cfg), "--out", path(out)]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("first failing property: dataset"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reduced.json");
    let o = Command::new(BIN)
        .args(["simulate", "--config", path(&cfg)])
        .env("STLCT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("dataset.bin").exists());

    // the flag wins over the environment
    let flag = dir.path().join("flag");
    let o = Command::new(BIN)
        .args(["simulate", "--config", path(&cfg), "--out", path(&flag)])
        .env("STLCT_OUT_DIR", dir.path().join("env"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(flag.join("dataset.bin").exists() && !dir.path().join("env").exists());
}

#[test]
fn zero_noise_gives_exact_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), |v| v["noise"]["delta"] = Value::from(0.0));
    let out = dir.path().join("out");
    assert_eq!(code(&stlct(&["simulate", "--config", path(&cfg), "--out", path(&out)])), 0);
    let (m, _) = read_dataset(&out.join("dataset.bin")).unwrap();
    let f = GaussianSisSignal::load(&out.join("signal.json")).unwrap();
    let exact = sample_exact(&f, &m.lct, &m.lattice).unwrap();
    assert_eq!(m.values, exact.values);
    assert_eq!(m.noise_inf_norm, 0.0);
}
