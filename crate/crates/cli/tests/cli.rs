use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hopf-energy")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("hopf-cli-{}-{name}", std::process::id()));
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn energy_of_hopf_meets_the_bound() {
    let v = json(&["--k", "1", "--resolution", "16,8", "energy"]);
    let r = &v["result"];
    let vol = r["vol_k"].as_f64().unwrap();
    assert!(r["gap"].as_f64().unwrap().abs() < 1e-10 * vol);
    assert!((vol - PI * (2.0 - 2f64.sin())).abs() < 1e-10);
    assert_eq!(v["meta"]["command"], "energy");
    assert!(v["meta"].get("wall_clock_s").is_none());

    let full = json(&["--k", "1", "--domain", "full", "--resolution", "24,8", "energy"]);
    let e = full["result"]["energy"].as_f64().unwrap();
    assert!((e - 5.0 * PI * PI).abs() < 1e-3 * 5.0 * PI * PI);
}

#[test]
fn empty_lab_run_has_no_rows() {
    let v = json(&["verify-identities", "--samples", "0"]);
    assert_eq!(v["result"]["config"]["samples"], 0);
    for row in v["result"]["rows"].as_array().unwrap() {
        assert_eq!(row["samples"], 0);
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let cfg = scratch("bad.json", r#"{"k": 1, "bogus": true}"#);
    let out = run(&["--config", cfg.to_str().unwrap(), "energy"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    std::fs::remove_file(cfg).ok();
}

#[test]
fn flags_override_the_config_file() {
    let cfg = scratch("ok.json", r#"{"k": 1, "domain": "full", "resolution": [8, 4]}"#);
    let path = cfg.to_str().unwrap();
    let from_file = json(&["--config", path, "energy"]);
    assert_eq!(from_file["result"]["domain"], "full");
    assert_eq!(from_file["meta"]["resolution"], serde_json::json!([8, 4]));
    let overridden = json(&["--config", path, "--domain", "cap:rho=0.5", "energy"]);
    assert_eq!(overridden["result"]["domain"], "cap:rho=0.5");
    let vol = overridden["result"]["vol_k"].as_f64().unwrap();
    assert!((vol - PI * (1.0 - 1f64.sin())).abs() < 1e-10);
    std::fs::remove_file(cfg).ok();
}

#[test]
fn csv_and_pretty_formats() {
    let out = run(&["--k", "1", "--resolution", "8,4", "energy", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("k,vol_k,dirichlet,energy,bound,gap"));
    assert!(lines.next().unwrap().starts_with("1,"));

    let out = run(&["--k", "1", "--resolution", "8,4", "--format", "pretty", "energy"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("energy") && text.contains("bound"));
    assert!(serde_json::from_str::<Value>(&text).is_err());
}

#[test]
fn output_is_reproducible_across_threads() {
    let args = ["--k", "2", "--domain", "cap:rho=0.8", "--resolution", "6,4", "transport"];
    let a = run(&args).stdout;
    let b = run(&args).stdout;
    let mut single = vec!["--threads", "1"];
    single.extend_from_slice(&args);
    assert_eq!(a, b);
    assert_eq!(a, run(&single).stdout);
}

#[test]
fn timing_adds_wall_clock() {
    let v = json(&["--k", "1", "--resolution", "8,4", "--timing", "energy"]);
    assert!(v["meta"]["wall_clock_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn out_writes_a_file() {
    let path = std::env::temp_dir().join(format!("hopf-cli-{}-out.json", std::process::id()));
    let out = run(&["--k", "1", "--resolution", "8,4", "--out", path.to_str().unwrap(), "energy"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["meta"]["command"], "energy");
    std::fs::remove_file(path).ok();
}

#[test]
fn remaining_commands_run_small() {
    let t = json(&["--k", "1", "--resolution", "8,4", "transport"]);
    assert_eq!(t["passed"], true);
    let j = json(&["--k", "1", "jacobian", "--points", "5"]);
    assert_eq!(j["passed"], true);
    let o = json(&["--k", "1", "--resolution", "8,6", "optimize", "--max-iters", "40"]);
    assert!(o["result"]["final_energy"]["energy"].as_f64().is_some());
    let s = json(&["--k", "1", "--resolution", "8,6", "sweep", "--rho", "0.7,1.2", "--max-iters", "40"]);
    assert_eq!(s["result"].as_array().unwrap().len(), 2);
}

#[test]
fn field_files_and_dimension_checks() {
    // Q swaps the first and third coordinates
    let q = "[[0,0,1,0,0,0],[0,1,0,0,0,0],[1,0,0,0,0,0],[0,0,0,1,0,0],[0,0,0,0,1,0],[0,0,0,0,0,1]]";
    let f = scratch("field.json", &format!(r#"{{"kind": "rotated_hopf", "k": 2, "Q": {q}}}"#));
    let spec = format!("file:{}", f.to_str().unwrap());
    let ok = json(&["--k", "2", "--resolution", "8,4", "--field", &spec, "energy"]);
    let vol = ok["result"]["vol_k"].as_f64().unwrap();
    assert!(ok["result"]["gap"].as_f64().unwrap().abs() < 1e-10 * vol);
    let mismatch = run(&["--k", "1", "--field", &spec, "energy"]);
    assert_eq!(mismatch.status.code(), Some(1));
    std::fs::remove_file(f).ok();
}

#[test]
fn bad_arguments_exit_with_error() {
    assert_eq!(run(&["energy", "--format", "yaml"]).status.code(), Some(1));
    assert_eq!(run(&["--domain", "cap:rho=9", "energy"]).status.code(), Some(1));
    assert_eq!(run(&["--resolution", "0,4", "energy"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
