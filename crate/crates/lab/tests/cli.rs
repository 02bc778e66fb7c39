use std::path::Path;
use std::process::{Command, Output};

use lorenz_lab::figures;

const REDUCED: &[&str] = &[
    "h_search=1e-2",
    "h_gap=1e-3",
    "chart_grid=40",
    "injectivity_grid=20",
    "hyperbolic_returns=500",
    "cat_instances=3",
    "T_sweep=30",
    "segment_sensitivity=",
];

fn lab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lorenz-lab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn reduced(cmd: &str) -> Vec<&str> {
    let mut v: Vec<&str> = REDUCED.iter().flat_map(|s| ["--set", s]).collect();
    v.push(cmd);
    v
}

#[test]
fn simulate_writes_trajectory_and_crossings() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(
        tmp.path(),
        &["simulate", "--t-max", "10", "--x", "-0.3", "--y", "0.2"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let traj = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x,y,z,region\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("simulate.json")).unwrap())
            .unwrap();
    // regular samples plus one per region change
    assert!(traj.lines().count() > 1001);
    assert_eq!(summary["samples"], traj.lines().count() - 1);
    let crossings = std::fs::read_to_string(tmp.path().join("crossings.csv")).unwrap();
    assert!(crossings.lines().count() > 2);
    assert!(tmp.path().join("config.txt").exists());
}

#[test]
fn invalid_config_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["--set", "lambda1=-1", "mixing"],
        vec!["--set", "no_such_key=1", "mixing"],
        vec!["--set", "k=1.0", "mixing"],
        vec!["--frobnicate", "mixing"],
    ] {
        let out = lab(tmp.path(), &args);
        assert_eq!(out.status.code(), Some(3), "{args:?}");
    }
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\nseed = 2\n").unwrap();
    let out = lab(tmp.path(), &["--config", cfg.to_str().unwrap(), "mixing"]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
}

#[test]
fn malformed_instance_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("instance.json");
    std::fs::write(&inst, "{\"segments\": []").unwrap();
    let out = lab(
        tmp.path(),
        &["test-spec", "--instance", inst.to_str().unwrap()],
    );
    assert_ne!(out.status.code(), Some(0));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["message"].is_string());
}

#[test]
fn reproduce_all_and_baseline_regression() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let out = lab(&a, &reduced("reproduce-all"));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mixing"], true);
    assert_eq!(summary["specification_lorenz"], "fail");
    assert_eq!(summary["specification_catmap"], "pass");

    let baseline = a.join("baseline.json");
    let mut args = reduced("reproduce-all");
    args.extend(["--baseline", baseline.to_str().unwrap()]);
    let same = lab(&tmp.path().join("b"), &args);
    assert_eq!(same.status.code(), Some(0));

    args.splice(0..0, ["--set", "lambda1=1.01"]);
    let drifted = lab(&tmp.path().join("c"), &args);
    assert_eq!(
        drifted.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&drifted.stdout)
    );
}

#[test]
fn figures_replay_from_saved_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(tmp.path(), &reduced("reproduce-all"));
    assert_eq!(out.status.code(), Some(0));
    let read = |name: &str| std::fs::read_to_string(tmp.path().join(name)).unwrap();
    assert_eq!(
        figures::gap_figure(&read("gap_certificate.json")).unwrap(),
        read("gap_certificate.svg")
    );
    assert_eq!(
        figures::return_map_figure(&read("return_map.json")).unwrap(),
        read("return_map.svg")
    );
    assert_eq!(
        figures::obstruction_figure(&read("obstruction.json")).unwrap(),
        read("obstruction.svg")
    );
    assert!(figures::gap_figure("{}").is_err());
}
