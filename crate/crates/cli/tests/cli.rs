use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/corpus").join(name)
}

fn relnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relnet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn graph_prints_one_digraph_per_subgraph() {
    let d = corpus("mini_wildfire.rddl");
    let i = corpus("mini_wildfire_2x1.rddl");
    let o = relnet(&["graph", "--domain", path_str(&d), "--instance", path_str(&i), "--format", "dot"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("digraph").count(), 4);
}

#[test]
fn graph_json_lists_nodes() {
    let o = relnet(&["graph", "--instance", path_str(&corpus("mini_wildfire_2x1.rddl")), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.is_object());
}

#[test]
fn eval_without_model_is_a_usage_error() {
    let o = relnet(&["eval", "--instance", path_str(&corpus("mini_wildfire_2x1.rddl"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_prints_usage() {
    let o = relnet(&["oracle", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_file_is_an_input_error() {
    let o = relnet(&["oracle", "--instance", "/definitely/not/here.rddl"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_prints_golden_value() {
    let o = relnet(&["oracle", "--instance", path_str(&corpus("mini_wildfire_2x1.rddl")), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["v_star"].as_f64().unwrap() + 8.0).abs() < 1e-9);
    assert_eq!(v["first_action"], "finisher");
}

#[test]
fn dump_mdp_counts() {
    let o = relnet(&["dump-mdp", "--instance", path_str(&corpus("wildfire_3x3.rddl")), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["state_vars"].as_array().unwrap().len(), 18);
    assert_eq!(v["actions"].as_array().unwrap().len(), 19);
}

#[test]
fn random_baseline_is_seeded() {
    let i = corpus("sysadmin_ring_3.rddl");
    let run = || stdout(&relnet(&["random-baseline", "--instance", path_str(&i), "--rollouts", "20", "--seed", "3", "--json"]));
    let a = run();
    assert_eq!(a, run());
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["rollouts"], 20);
}

#[test]
fn train_then_eval_with_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let log = dir.path().join("train.csv");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"model": {"heads": 2}, "train": {"log_every": 100}}"#).unwrap();
    let o = relnet(&[
        "train",
        "--instance",
        path_str(&corpus("sysadmin_ring_3.rddl")),
        "--instance",
        path_str(&corpus("sysadmin_ring_4.rddl")),
        "--out",
        path_str(&ckpt),
        "--steps",
        "400",
        "--workers",
        "1",
        "--seed",
        "1",
        "--config",
        path_str(&cfg),
        "--log",
        path_str(&log),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&log).unwrap().starts_with("wall_seconds,env_steps"));

    let manifest = dir.path().join("baselines.json");
    std::fs::write(&manifest, r#"{"sysadmin_ring_5": {"v_min": 0.0, "v_max": 50.0}}"#).unwrap();
    let o = relnet(&[
        "eval",
        "--model",
        path_str(&ckpt),
        "--instance",
        path_str(&corpus("sysadmin_ring_5.rddl")),
        "--rollouts",
        "10",
        "--baselines",
        path_str(&manifest),
        "--reference-alpha",
        "1.0",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["alpha"].is_number());
    assert!(v["beta"].is_number() || v["beta"] == "INF");

    // a checkpoint for one domain is rejected on another
    let o = relnet(&["eval", "--model", path_str(&ckpt), "--instance", path_str(&corpus("mini_wildfire_2x1.rddl"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"trian": {}}"#).unwrap();
    let o = relnet(&[
        "train",
        "--instance",
        path_str(&corpus("sysadmin_ring_3.rddl")),
        "--out",
        path_str(&dir.path().join("m.ckpt")),
        "--config",
        path_str(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
