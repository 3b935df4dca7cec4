use std::path::Path;
use std::process::{Command, Output};

fn iotopo(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iotopo"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const TWO_NODES: &str = r#"{
  "deployment": {
    "node_count": 2,
    "positions": [[0.0, 0.0], [1.0, 0.0]],
    "region": {"shape": "rectangle", "width_km": 1.0, "height_km": 1.0},
    "seed": 0
  },
  "graph": {"node_count": 2, "edges": [[0, 1, 1.0]], "noise_factor": 0.0, "sensing_range": 72.0}
}"#;

#[test]
fn generate_emits_scenario_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = iotopo(&["generate", "--shape", "annulus", "--n", "50", "--outer-km", "1.0", "--seed", "7"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["deployment"]["node_count"], 50);
    assert_eq!(v["deployment"]["seed"], 7);
    assert_eq!(v["deployment"]["positions"].as_array().unwrap().len(), 50);
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = iotopo(&["generate", "--seed", "3"], dir.path());
    let b = iotopo(&["generate", "--seed", "3"], dir.path());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn extract_two_nodes_gives_one_edge() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("two.json"), TWO_NODES).unwrap();
    let out = iotopo(&["extract", "two.json", "--algo", "maxnttop", "--config", "defaults"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["edges"].as_array().unwrap().len(), 1);
    assert_eq!(v["algo"], "maxnttop");
}

#[test]
fn localize_reports_rms() {
    let dir = tempfile::tempdir().unwrap();
    let gen = iotopo(
        &["generate", "--n", "30", "--inner-km", "0.2", "--range-km", "0.6", "--seed", "2", "--out", "sc.json"],
        dir.path(),
    );
    assert_eq!(gen.status.code(), Some(0));
    let out = iotopo(&["localize", "sc.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["rms_km"].as_f64().unwrap() < 1e-6);
}

#[test]
fn experiment_and_plot_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
name = "tiny"
algorithms = ["lmst", "maxnttop"]
[scenario]
shape = "annulus"
n = 20
inner_km = 0.2
outer_km = 1.0
sensing_range_km = 0.8
seeds = [1]
[sweep]
start_db = 0.0
stop_db = 5.0
step_db = 2.5
"#;
    std::fs::write(dir.path().join("tiny.toml"), cfg).unwrap();
    let out = iotopo(&["experiment", "--config", "tiny.toml", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/reports.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);

    let plot = iotopo(&["plot", "res/reports.csv", "--out", "charts"], dir.path());
    assert_eq!(plot.status.code(), Some(0));
    assert!(dir.path().join("charts/fig_throughput_total.svg").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[scenario]\nshape = \"annulus\"\nn = 5\nseeds = []\n").unwrap();
    let out = iotopo(&["experiment", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.seeds"));
    assert_eq!(iotopo(&["experiment", "--config", "missing.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(iotopo(&["frobnicate"], dir.path()).status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // A tree of three nodes has no globally rigid patch.
    let tree = r#"{
      "deployment": {"node_count": 3, "positions": [[0,0],[1,0],[2,0.5]],
        "region": {"shape": "rectangle", "width_km": 3.0, "height_km": 1.0}, "seed": 0},
      "graph": {"node_count": 3, "edges": [[0,1,1.0],[1,2,1.118]], "noise_factor": 0.0, "sensing_range": 1.2}
    }"#;
    std::fs::write(dir.path().join("tree.json"), tree).unwrap();
    let out = iotopo(&["localize", "tree.json"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
