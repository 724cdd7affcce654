use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arcbound"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn frames_on_heisenberg() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin().args(["frames", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let r = report(dir.path(), "frames.json");
    assert_eq!(r["schema"], 1);
    let frames = r["result"]["frames"].as_array().unwrap();
    let pass: Vec<bool> = frames.iter().map(|f| f["pass"].as_bool().unwrap()).collect();
    assert_eq!(pass, vec![true, false, false, false, false]);
    assert_eq!(r["config"]["tolerances"]["integrator"], 1e-10);
    assert!(dir.path().join("frames.csv").exists());
}

#[test]
fn second_order_sweep_rejects_every_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"system": "heisenberg", "second_order": {"t1": [0.2, 0.1, 0.05]}}"#);
    let st = bin().arg("second-order").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let r = report(dir.path(), "second_order.json");
    let c = r["result"]["candidates"].as_array().unwrap();
    assert_eq!(c.len(), 3);
    assert!(c.iter().all(|x| x["rejection"]["verdict"] == "RejectedNotOptimal"));
    let csv = std::fs::read_to_string(dir.path().join("second_order.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn simulate_abelian_is_one_bang_arc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"system": "abelian", "simulate": {"covector": [1.0, -2.0, 0.0], "horizon": 1.0}}"#);
    let st = bin().arg("simulate").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let r = report(dir.path(), "simulate.json");
    assert_eq!(r["result"]["arc_count"], 1);
    assert_eq!(r["result"]["regime"]["regime"], "SingleInputReduction");
    let csv = std::fs::read_to_string(dir.path().join("extremal.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,z,l1,l2,l3,u1,u2,phi1,phi2,phi12"));
}

#[test]
fn invalid_config_exits_with_one_and_names_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"simulate": {"horizon": -1}}"#);
    let out = bin().arg("simulate").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("system: required field missing"), "{err}");
    assert!(err.contains("simulate.horizon"), "{err}");
}

#[test]
fn oracle_reports_are_reproducible() {
    let body = r#"{"system": "heisenberg", "oracle": {"targets": [[0.2, 0.1, 0.0], [0.1, 0.0, 0.01]], "max_arcs": 3, "starts": 3, "t_max": 1.0}}"#;
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), body);
        let st = bin().args(["oracle", "--seed", "11", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
        assert_eq!(st.code(), Some(0));
        bytes.push(std::fs::read(dir.path().join("oracle.json")).unwrap());
        let r = report(dir.path(), "oracle.json");
        assert_eq!(r["config"]["seed"], 11);
        assert_eq!(r["result"]["violations"], 0);
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn sharpness_without_a_sharp_target_exits_with_two() {
    // (0.2, 0.2, 0) is reached by a single diagonal arc
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"system": "heisenberg", "oracle": {"targets": [[0.2, 0.2, 0.0]], "max_arcs": 5, "starts": 2}}"#);
    let st = bin().arg("sharpness").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let r = report(dir.path(), "sharpness.json");
    assert_eq!(r["result"]["found"], false);
}
