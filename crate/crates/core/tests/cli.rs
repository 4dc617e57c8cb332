use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermometry"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const QUBIT: &[&str] = &["--omega12", "1", "--beta", "1.0986122886681098", "--gamma", "1"];

fn with(base: &[&'static str], extra: &[&'static str]) -> Vec<&'static str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn trace_csv_has_fixed_columns_and_requested_rows() {
    let args = with(&["trace"], &with(QUBIT, &["--a", "0.1", "--points", "17"]));
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,F,F_norm,p2,abs_rho12,dbeta_p2,alpha,delta");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 17);
    assert!(rows.iter().all(|r| r.split(',').count() == 8));
    assert!(rows[0].starts_with("0,0,"));
}

#[test]
fn trace_json_carries_schema_version() {
    let args = with(&["trace"], &with(QUBIT, &["--a", "0.8", "--points", "5", "--format", "json"]));
    let o = run(&args);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], "1");
    assert_eq!(v["initial_state"]["region"], "I");
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let args = ["estimate", "--preset", "regions", "--a", "0", "--replicas", "50", "--seed", "7", "--format", "json"];
    let (x, y) = (run(&args), run(&args));
    assert!(x.status.success());
    assert_eq!(x.stdout, y.stdout);
    let other = run(&["estimate", "--preset", "regions", "--a", "0", "--replicas", "50", "--seed", "8", "--format", "json"]);
    assert_ne!(x.stdout, other.stdout);
}

#[test]
fn coherent_estimate_is_bound_only() {
    let o = run(&["estimate", "--preset", "regions", "--a", "0.1", "--r", "1", "--replicas", "10", "--format", "json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["bound_only"], true);
    assert!(v["ratio"].is_null());
}

#[test]
fn preset_trace_writes_one_file_per_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("regions");
    let o = run(&["trace", "--preset", "regions", "--points", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    for label in ["a0.1", "a0.35", "a0.8"] {
        let text = fs::read_to_string(out.join(format!("{label}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 10);
    }
}

#[test]
fn experiment_writes_traces_gad_table_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["experiment", "--preset", "coherent-angles", "--points", "9", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["schema_version"], "1");
    assert!(dir.path().join("gad.csv").exists());
    let traces = fs::read_dir(dir.path()).unwrap().filter(|e| {
        let name = e.as_ref().unwrap().file_name().into_string().unwrap();
        name.starts_with("cold_") || name.starts_with("hot_")
    });
    assert_eq!(traces.count(), 8);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"omega12": 1.0, "beta": 1.0986122886681098, "gamma": 1.0, "a": 0.35, "points": 4}"#).unwrap();
    let o = run(&["trace", "--config", cfg.to_str().unwrap(), "--points", "6"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 7);

    fs::write(&cfg, r#"{"omega12": 1.0, "bogus": 2}"#).unwrap();
    assert_eq!(run(&["trace", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn exit_codes_separate_input_io_and_model_failures() {
    let zero_t = with(&["trace"], &with(QUBIT, &["--a", "0.1", "--t-max", "0"]));
    assert_eq!(run(&zero_t).status.code(), Some(2));
    let both_temps = ["trace", "--omega12", "1", "--beta", "1", "--n12", "2", "--gamma", "1", "--a", "0.1"];
    assert_eq!(run(&both_temps).status.code(), Some(2));
    assert_eq!(run(&["trace", "--nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["trace", "--config", "/nonexistent/run.json"]).status.code(), Some(3));

    let clean = run(&["validate"]);
    assert_eq!(clean.status.code(), Some(0));
    assert!(stdout(&clean).contains("PASS"));
    let faulty = run(&["validate", "--inject-fault"]);
    assert_eq!(faulty.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&faulty.stderr).contains("null-eigenvalue-count"));
}
