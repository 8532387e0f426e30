use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ebnm::rng::{stream, stream_seed};
use ebnm::simulation::{generate_data, make_theta_star, TruthSpec};
use serde_json::Value;

fn ebnm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebnm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_data(path: &Path, x: &[f64]) {
    let mut text = String::from("# synthetic data\n");
    for v in x {
        text.push_str(&format!("{v}\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn empty_data_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.txt");
    fs::write(&data, "").unwrap();
    let out = ebnm(&["fit", p(&data)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no observations"));
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.txt");
    fs::write(&data, "1.0\n2.0\nthree\n").unwrap();
    let out = ebnm(&["fit", p(&data)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn bad_kappa_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.txt");
    write_data(&data, &[0.1, 5.0, -0.3]);
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"model": {"kappa": 1.5}}"#).unwrap();
    let out = ebnm(&["fit", p(&data), "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(0, 1)"));

    fs::write(&cfg, r#"{"model": {"kapa": 0.5}}"#).unwrap();
    assert_eq!(ebnm(&["fit", p(&data), "--config", p(&cfg)]).status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(ebnm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ebnm(&["--help"]).status.code(), Some(0));
}

fn inclusion_design() -> (Vec<f64>, Vec<f64>) {
    let theta = make_theta_star(&TruthSpec::new(200, vec![(10, 7.0)]).unwrap()).unwrap();
    let x = generate_data(&theta, &mut stream(stream_seed(7, 0))).unwrap().into_inner();
    (theta, x)
}

#[test]
fn fit_reports_inclusion_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (theta, x) = inclusion_design();
    let data = dir.path().join("x.txt");
    write_data(&data, &x);
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"sampler": {"iterations": 2000, "burn_in": 500}}"#).unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let chain = dir.path().join("chain.json");
    for out in [&a, &b] {
        let o = ebnm(&[
            "fit", p(&data), "--config", p(&cfg), "--out", p(out), "--chain-out", p(&chain), "--seed", "11",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let doc = read_json(&a);
    assert_eq!(doc["manifest"]["command"], "fit");
    assert_eq!(doc["manifest"]["root_seed"], 11);
    assert_eq!(doc["manifest"]["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(doc["payload"], read_json(&b)["payload"]);
    assert_eq!(doc["manifest"]["config_digest"], read_json(&b)["manifest"]["config_digest"]);

    let incl: Vec<f64> = doc["payload"]["estimate"]["inclusion"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(incl.len(), 200);
    for i in 0..200 {
        if theta[i] != 0.0 {
            assert!(incl[i] > 0.9, "signal {i}: {}", incl[i]);
        }
    }
    let null_mean = incl[10..].iter().sum::<f64>() / 190.0;
    assert!(null_mean < 0.1, "mean null inclusion {null_mean}");
    assert_eq!(doc["payload"]["config"]["alpha_source"], "default");
    assert_eq!(doc["payload"]["diagnostics"]["s_source"], "threshold");

    // the saved chain can be diagnosed on its own
    let diag = dir.path().join("d.json");
    let o = ebnm(&["diagnose", p(&chain), "--out", p(&diag), "--sparsity", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_json(&diag);
    assert_eq!(d["payload"]["input_kind"], "chain");
    assert_eq!(d["payload"]["diagnostics"]["s"], 10);
    assert_eq!(d["payload"]["inclusion"].as_array().unwrap().len(), 200);
}

#[test]
fn diagnose_constant_omega_chain_gives_one_bin() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.txt");
    write_data(&data, &[0.2, -0.1, 6.0, 0.4]);
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"sampler": {"iterations": 300, "burn_in": 100}}"#).unwrap();
    let chain_path = dir.path().join("chain.json");
    let o = ebnm(&["fit", p(&data), "--config", p(&cfg), "--chain-out", p(&chain_path), "--out", p(&dir.path().join("f.json"))]);
    assert!(o.status.success());

    let mut chain = read_json(&chain_path);
    let m = chain["omega_draws"].as_array().unwrap().len();
    chain["omega_draws"] = Value::from(vec![0.5; m]);
    fs::write(&chain_path, serde_json::to_string(&chain).unwrap()).unwrap();

    let out = dir.path().join("d.json");
    let o = ebnm(&["diagnose", p(&chain_path), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_json(&out);
    let hist = d["payload"]["diagnostics"]["omega_hist"].as_array().unwrap();
    assert_eq!(hist.len(), 1);
    assert_eq!(hist[0]["count"], m);
    assert_eq!(d["payload"]["diagnostics"]["omega_mode_loc"], 0.5);
    assert_eq!(d["payload"]["diagnostics"]["s_source"], "posterior");

    chain["omega_draws"][0] = Value::from(1.5);
    fs::write(&chain_path, serde_json::to_string(&chain).unwrap()).unwrap();
    assert_eq!(ebnm(&["diagnose", p(&chain_path)]).status.code(), Some(1));
}

#[test]
fn feasible_verdicts() {
    let o = ebnm(&["feasible", "0.99", "1000", "200"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["payload"]["verdict"], "feasible");
    assert!((v["payload"]["margin"].as_f64().unwrap() - 0.00481).abs() < 1e-5);

    let o = ebnm(&["feasible", "0.99", "100", "200"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["payload"]["verdict"], "infeasible");
    assert!(v["payload"]["note"].is_string());

    assert_eq!(ebnm(&["feasible", "0.99", "100", "0.5"]).status.code(), Some(2));
    assert_eq!(ebnm(&["feasible", "1.2", "100", "200"]).status.code(), Some(2));
}

const SMALL_STUDY: &str = r#"{
  "name": "small",
  "n": 100,
  "replications": 4,
  "root_seed": 99,
  "estimators": ["EBM", "HT", "HTO"],
  "model": {"alpha": "auto"},
  "sampler": {"iterations": 400, "burn_in": 100, "keep_theta_draws": false},
  "cells": [
    {"label": "s=5 A=6", "groups": [[5, 6.0]]},
    {"label": "s=10 A=3", "groups": [[10, 3.0]]}
  ],
  "reference": {"EBM": [1.0, 2.0]}
}"#;

#[test]
fn simulate_csv_round_trips_against_audit() {
    let dir = tempfile::tempdir().unwrap();
    let study = dir.path().join("small.json");
    fs::write(&study, SMALL_STUDY).unwrap();
    let csv_path = dir.path().join("small.csv");
    let o = ebnm(&["simulate", p(&study), "--out", p(&csv_path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let audit = read_json(&dir.path().join("small.audit.json"));
    assert_eq!(audit["manifest"]["command"], "simulate");

    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["estimator", "s=5 A=6", "s=10 A=3"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let labels: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(labels, ["EBM", "EBM se", "HT", "HT se", "HTO", "HTO se", "reference EBM"]);

    let cells = audit["payload"]["cells"].as_array().unwrap();
    for (e, label) in ["EBM", "HT", "HTO"].iter().enumerate() {
        let row = &rows[2 * e];
        for (c, cell) in cells.iter().enumerate() {
            let losses: Vec<f64> = cell["result"]["replications"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| r["losses"][e].as_f64().unwrap())
                .collect();
            assert_eq!(losses.len(), 4);
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            let cell_value: f64 = row[c + 1].parse().unwrap();
            assert_eq!(cell_value, mean, "{label} column {c}");
        }
    }
    // HTO never loses to HT
    for c in 1..=2 {
        let ht: f64 = rows[2][c].parse().unwrap();
        let hto: f64 = rows[4][c].parse().unwrap();
        assert!(hto <= ht);
    }
}

#[test]
fn single_replication_leaves_stderr_empty() {
    let dir = tempfile::tempdir().unwrap();
    let study = dir.path().join("one.json");
    fs::write(&study, SMALL_STUDY.replace("\"replications\": 4", "\"replications\": 1")).unwrap();
    let csv_path = dir.path().join("one.csv");
    let audit = dir.path().join("audit.json");
    let o = ebnm(&["simulate", p(&study), "--out", p(&csv_path), "--audit", p(&audit)]);
    assert!(o.status.success());
    assert!(audit.exists());
    let text = fs::read_to_string(&csv_path).unwrap();
    assert!(text.lines().any(|l| l == "EBM se,,"), "{text}");
}

#[test]
fn study_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let study = dir.path().join("bad.json");
    fs::write(&study, SMALL_STUDY.replace("\"root_seed\"", "\"rootseed\"")).unwrap();
    let o = ebnm(&["simulate", p(&study), "--out", p(&dir.path().join("o.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}
