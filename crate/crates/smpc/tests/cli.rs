use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn small_config() -> Value {
    json!({
        "model": {"model": "paper_example", "a": 1.0, "b": 0.25, "p_a": 0.7,
                  "state_weight": 1.0, "control_weight": 25.0,
                  "control_bounds": [-10, 10], "state_domain": [0, 20]},
        "solver": {"grid_size": 401, "control_scan_points": 101},
        "mpc": {"x0": 3.0, "horizons": [1, 3], "K_max": 40, "paths": 16, "seed": 7},
        "turnpike": {"N_long": 10, "horizons": [3, 8]},
        "performance": {"K_min": 10, "mpc_horizon": 3, "equivalence_steps": 10,
                        "overtaking_steps": 3, "reference_horizon": 8,
                        "oracle_max_horizon": 3, "dpp_states": [1.0, 3.0]},
        "output": {"emit_svg": true}
    })
}

fn write_config(dir: &Path, cfg: &Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn smpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smpc")).args(args).output().expect("spawn smpc")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    smpc(&args)
}

#[test]
fn missing_config_file_exits_2() {
    let o = smpc(&["solve-ocp", "--config", "/nonexistent/smpc.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_horizons_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["mpc"]["horizons"] = json!([]);
    let path = write_config(dir.path(), &cfg);
    let o = run("run-mpc", &path, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mpc.horizons"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"model\": ").unwrap();
    assert_eq!(run("report", &path, dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn node_cap_overflow_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["solver"]["node_cap"] = json!(4);
    let path = write_config(dir.path(), &cfg);
    let o = run("solve-ocp", &path, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn solve_ocp_writes_laws_for_one_step_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["turnpike"]["horizons"] = json!([1, 3]);
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("nested/out");
    let o = run("solve-ocp", &path, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("ocp_N1.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N,k,x,probability,value"));
    let depths: Vec<usize> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(depths, vec![0, 1, 1]);
    assert!(out.join("ocp_N3.csv").exists());
    assert!(out.join("ocp_states.svg").exists());
}

#[test]
fn run_mpc_is_byte_identical_across_runs_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_config());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(run("run-mpc", &path, &a, &[]).status.success());
    assert!(run("run-mpc", &path, &b, &[]).status.success());
    assert!(run("run-mpc", &path, &c, &["--seed", "8"]).status.success());
    let read = |d: &Path| fs::read(d.join("performance_N3.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(fs::read(a.join("performance.svg")).unwrap(), fs::read(b.join("performance.svg")).unwrap());
}

#[test]
fn single_path_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["mpc"]["paths"] = json!(1);
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    assert!(run("run-mpc", &path, &out, &[]).status.success());
    let trace = fs::read_to_string(out.join("trace_N3.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 40);
    assert!(out.join("trace.svg").exists());
}

#[test]
fn turnpike_and_report_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    assert!(run("turnpike", &path, &out, &[]).status.success());
    let counts = fs::read_to_string(out.join("turnpike_counts.csv")).unwrap();
    assert_eq!(counts.lines().next(), Some("N,count_eps_0.05,count_eps_0.1,count_eps_0.2"));
    assert_eq!(counts.lines().count(), 3);

    let o = run("report", &path, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in ["stationary", "oracle", "dpp", "performance", "equivalence", "optimal_operation", "overtaking", "checks"] {
        assert!(report.get(key).is_some(), "report.json lacks {key}");
    }
    assert_eq!(report["overtaking"]["margins"].as_array().unwrap().len(), 3);
    assert_eq!(fs::read_to_string(out.join("overtaking_margin.csv")).unwrap().lines().count(), 4);
}
