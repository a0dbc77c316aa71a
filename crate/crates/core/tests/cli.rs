use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_coopsense");

const SCENARIO: &str = r#""scenario": {"n_total": 6, "n_attackers": 2, "p_idle": 0.6,
    "p_false_alarm": 0.08, "p_missed_detection": 0.08, "collision_penalty": 1e4}"#;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(BIN)
        .arg(sub)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env_remove("COOPSENSE_WORKERS")
        .output()
        .unwrap()
}

fn config(command: &str) -> String {
    format!(r#"{{"schema_version": 1, {SCENARIO}, "command": {command}}}"#)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn analyze_writes_report_and_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "analyze", &config(r#"{"name": "analyze", "n_sweep": [2, 14]}"#), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(report["condition_i"]["region"], "II");
    assert_eq!(report["posterior"].as_array().unwrap().len(), 7);
    let bounds = fs::read_to_string(out.join("bounds.csv")).unwrap();
    assert_eq!(bounds.lines().next().unwrap(), "N,lower,upper");
    assert_eq!(bounds.lines().count(), 14);
    let behavior = fs::read_to_string(out.join("behavior.csv")).unwrap();
    assert_eq!(behavior.lines().count(), 1 + 5 * 3);
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "analyze", "{ not json", &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "analyze", &config(r#"{"name": "analyze", "n_swep": [2, 3]}"#), &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn violations_listed_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = r#"{"schema_version": 1, "scenario": {"n_total": 3, "n_attackers": 3, "p_idle": 0.6,
        "p_false_alarm": 0.7, "p_missed_detection": 0.5, "collision_penalty": -1}}"#;
    let o = run(dir.path(), "analyze", bad, &[]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["n_attackers", "p_false_alarm", "collision_penalty"] {
        assert!(err.contains(field), "{err}");
    }
}

#[test]
fn command_mismatch_and_missing_flag_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "simulate", &config(r#"{"name": "analyze"}"#), &[]);
    assert_eq!(code(&o), 2);
    let o = Command::new(BIN).arg("analyze").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn thresholds_writes_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = r#"{"name": "thresholds", "sweeps": [
        {"kind": "direct_vs_m", "n_values": [7, 9, 11]},
        {"kind": "direct_vs_p_idle", "p_idle_values": [0.3, 0.6]},
        {"kind": "delta_vs_m", "n_values": [6]},
        {"kind": "hetero_direct", "p_false_alarm_attacker": [0.02, 0.05], "p_missed_detection_attacker": [0.02, 0.05]}]}"#;
    let o = run(dir.path(), "thresholds", &config(cmd), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let m = fs::read_to_string(out.join("direct_vs_m.csv")).unwrap();
    assert_eq!(m.lines().count(), 1 + 6 + 8 + 10);
    assert_eq!(m.lines().next().unwrap(), "N,M,P_I,P_f,P_m,C_p,threshold,binding_constraint");
    assert_eq!(fs::read_to_string(out.join("hetero_direct.csv")).unwrap().lines().count(), 5);
    assert_eq!(fs::read_to_string(out.join("delta_vs_m.csv")).unwrap().lines().count(), 6);
}

#[test]
fn empty_sweep_axis_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "thresholds",
        &config(r#"{"name": "thresholds", "sweeps": [{"kind": "direct_vs_m", "n_values": []}]}"#),
        &[],
    );
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("out").join("direct_vs_m.csv").exists());
}

#[test]
fn simulate_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = r#"{"name": "simulate", "mode": "indirect", "horizon": 300, "replications": 8, "trace_slots": 20}"#;
    let mut outputs = Vec::new();
    for workers in ["1", "8"] {
        let o = run(dir.path(), "simulate", &config(cmd), &["--seed", "42", "--workers", workers]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let out = dir.path().join("out");
        outputs.push((
            fs::read(out.join("stats.json")).unwrap(),
            fs::read(out.join("trace.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let stats: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    assert_eq!(stats["schema_version"], 1);
    assert_eq!(stats["base_seed"], 42);
    let trace = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert_eq!(trace.lines().count(), 21);
}

#[test]
fn workers_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    fs::write(&path, config(r#"{"name": "simulate", "horizon": 50, "replications": 2}"#)).unwrap();
    let o = Command::new(BIN)
        .args(["simulate", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .env("COOPSENSE_WORKERS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_passes_on_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = r#"{"name": "verify", "checks": [1, 4, 5], "posterior_grid": 10, "direct_instances": 20}"#;
    let o = run(dir.path(), "verify", &config(cmd), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out").join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_perturbation_exits_1_naming_check() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = r#"{"name": "verify", "checks": [4], "direct_instances": 20, "perturb_direct_threshold": 1.1}"#;
    let o = run(dir.path(), "verify", &config(cmd), &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("direct_threshold_oracle"));
}

#[test]
fn verify_empty_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "verify", &config(r#"{"name": "verify", "checks": [4], "direct_instances": 0}"#), &[]);
    assert_eq!(code(&o), 2);
}
