use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rcoda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcoda"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn simulate(dir: &Path, name: &str, rows: &str, beta: &str) {
    let out = rcoda(dir, &["simulate", "--rows", rows, "--cols", rows, "--beta", beta, "--sweeps", "200", "--seed", "7", "--out", name]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_reproducible_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "a.csv", "16", "0.4");
    simulate(d, "b.csv", "16", "0.4");
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), std::fs::read(d.join("b.csv")).unwrap());
    let manifest: Value = serde_json::from_slice(&std::fs::read(d.join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["config"]["beta"], 0.4);
    assert_eq!(manifest["config"]["sweeps"], 200);

    simulate(d, "c.bin", "16", "0.4");
    let bin = std::fs::read(d.join("c.bin")).unwrap();
    assert_eq!(bin.len(), 9 + 256);

    // Replaying the manifest (with a new output) gives the same field.
    let out = rcoda(d, &["simulate", "--config", "a.csv.manifest.json", "--out", "replay.csv"]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), std::fs::read(d.join("replay.csv")).unwrap());

    let out = rcoda(d, &["simulate", "--beta", "4.5", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[0, 4]"));
    let out = rcoda(d, &["simulate", "--beta", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = rcoda(d, &["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"rows": 6, "cols": 5, "beta": 0.2, "sweeps": 10, "out": "f.csv"}"#).unwrap();
    let out = rcoda(d, &["simulate", "--config", "cfg.json", "--cols", "7"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(d.join("f.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 7);
    std::fs::write(d.join("bad.json"), r#"{"rowz": 6}"#).unwrap();
    assert_eq!(rcoda(d, &["simulate", "--config", "bad.json", "--beta", "0.1", "--out", "g.csv"]).status.code(), Some(2));
}

#[test]
fn fit_reports_summary_and_guards_backends() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "f.csv", "16", "0.4");
    let args = ["fit", "--field", "f.csv", "--iterations", "600", "--burn-in", "200", "--trace", "t.csv", "--seed", "2"];
    let summary = stdout_json(&rcoda(d, &[&args[..], &["--backend", "rcoda"]].concat()));
    assert_eq!(summary["backend"], "rcoda");
    let beta = &summary["beta"];
    assert!(beta["lower"].as_f64().unwrap() <= beta["mean"].as_f64().unwrap());
    assert!(summary["alpha"]["mean"].is_number());
    let trace = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert_eq!(trace.lines().count(), 601);

    let pl = stdout_json(&rcoda(d, &[&args[..], &["--backend", "pl"]].concat()));
    assert!(pl["alpha"].is_null());

    // Decomposition variant must match the order.
    let out = rcoda(d, &[&args[..], &["--backend", "rcoda-c"]].concat());
    assert_eq!(out.status.code(), Some(2));
    let out = rcoda(d, &[&args[..], &["--backend", "rcoda-c", "--order", "second"]].concat());
    assert!(out.status.success());
    // Exact likelihood is out of reach for 16x16... the capacity guard.
    simulate(d, "big.csv", "20", "0.3");
    let out = rcoda(d, &["fit", "--field", "big.csv", "--backend", "exact"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("capacity"));
    let out = rcoda(d, &["fit", "--field", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let out = rcoda(d, &["fit", "--field", "f.csv", "--backend", "tdi"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tdi_table_and_range_guard() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "f.csv", "6", "0.4");
    let out = rcoda(
        d,
        &["tdi-table", "--rows", "6", "--cols", "6", "--grid-max", "0.9", "--grid-step", "0.1", "--sweeps", "200", "--burn-in", "50", "--out", "table.csv", "--bonds-out", "bonds.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bonds = std::fs::read_to_string(d.join("bonds.csv")).unwrap();
    assert!(bonds.starts_with("beta,mean_U,se_U"));
    assert_eq!(bonds.lines().count(), 11);
    let ok = rcoda(d, &["fit", "--field", "f.csv", "--backend", "tdi", "--table", "table.csv", "--iterations", "300", "--burn-in", "100"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let wide = rcoda(d, &["fit", "--field", "f.csv", "--backend", "tdi", "--table", "table.csv", "--prior-beta", "0,4"]);
    assert_eq!(wide.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&wide.stderr).contains("range"));
    // A table for a different lattice is refused.
    simulate(d, "g.csv", "8", "0.4");
    let other = rcoda(d, &["fit", "--field", "g.csv", "--backend", "tdi", "--table", "table.csv"]);
    assert_eq!(other.status.code(), Some(2));
}

#[test]
fn experiment_outputs_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = r#"{
        "name": "tiny",
        "kind": "rmse",
        "sizes": [8],
        "betas": [0.2, 0.5],
        "backends": ["rcoda", "pl"],
        "replicates": 3,
        "generation_sweeps": 100,
        "mcmc": {"iterations": 300, "burn_in": 100},
        "master_seed": 9
    }"#;
    std::fs::write(d.join("spec.json"), spec).unwrap();
    let one = stdout_json(&rcoda(d, &["experiment", "--spec", "spec.json", "--workers", "1", "--out-dir", "one"]));
    let two = stdout_json(&rcoda(d, &["experiment", "--spec", "spec.json", "--workers", "3", "--out-dir", "two"]));
    assert_eq!(one["cells"], two["cells"]);
    for f in ["tiny.csv", "tiny_replicates.csv"] {
        assert_eq!(std::fs::read(d.join("one").join(f)).unwrap(), std::fs::read(d.join("two").join(f)).unwrap());
    }
    assert!(d.join("one/tiny.json").exists());
    let manifest: Value = serde_json::from_slice(&std::fs::read(d.join("one/tiny.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["experiment"]["master_seed"], 9);
    // Replaying from the manifest reproduces the report.
    let again = rcoda(d, &["experiment", "--config", "one/tiny.manifest.json", "--out-dir", "three"]);
    assert!(again.status.success());
    assert_eq!(std::fs::read(d.join("one/tiny.csv")).unwrap(), std::fs::read(d.join("three/tiny.csv")).unwrap());

    assert_eq!(rcoda(d, &["experiment", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(rcoda(d, &["experiment"]).status.code(), Some(2));
}

#[test]
fn hmrf_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Two flat halves with mild noise, as an 8-bit PGM.
    let (rows, cols) = (12usize, 12usize);
    let mut pgm = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for r in 0..rows {
        for c in 0..cols {
            let base = if c < cols / 2 { 70 } else { 180 };
            pgm.push((base + ((r * 7 + c * 13) % 11) as i32 - 5) as u8);
        }
    }
    std::fs::write(d.join("img.pgm"), pgm).unwrap();
    let out = rcoda(
        d,
        &["hmrf", "--image", "img.pgm", "--backend", "rcoda", "--order", "first", "--iterations", "800", "--burn-in", "200", "--snapshots", "50", "--out-dir", "run"],
    );
    let summary = stdout_json(&out);
    let mu = summary["mu"].as_array().unwrap();
    assert!(mu[0]["mean"].as_f64().unwrap() < mu[1]["mean"].as_f64().unwrap());
    for f in ["hmrf_trace.csv", "hmrf_labels.csv", "hmrf_predictive.json", "hmrf_summary.json", "hmrf.manifest.json"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let labels = std::fs::read_to_string(d.join("run/hmrf_labels.csv")).unwrap();
    assert!(labels.lines().next().unwrap().starts_with("1,1,1"));
    // Too few retained draws for the predictive check.
    let short = rcoda(d, &["hmrf", "--image", "img.pgm", "--iterations", "300", "--burn-in", "100", "--out-dir", "short"]);
    assert_eq!(short.status.code(), Some(2));
    let skipped = rcoda(
        d,
        &["hmrf", "--image", "img.pgm", "--iterations", "300", "--burn-in", "100", "--predictive", "false", "--out-dir", "short"],
    );
    assert!(skipped.status.success());
}

#[test]
fn plan_dump_matches_six_by_six_classes() {
    let dir = tempfile::tempdir().unwrap();
    let plan = stdout_json(&rcoda(dir.path(), &["plan-dump", "--rows", "6", "--cols", "6", "--order", "second", "--T", "1"]));
    assert_eq!(plan["levels"][0]["class_sizes"], serde_json::json!([9, 9, 9, 9]));
    let first = stdout_json(&rcoda(dir.path(), &["plan-dump", "--rows", "4", "--cols", "4", "--order", "first", "--T", "1"]));
    assert_eq!(first["levels"].as_array().unwrap().len(), 1);
    let deep = rcoda(dir.path(), &["plan-dump", "--rows", "4", "--cols", "4", "--T", "9"]);
    assert_eq!(deep.status.code(), Some(2));
}
