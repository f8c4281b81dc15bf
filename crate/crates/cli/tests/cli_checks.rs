//! Black-box checks of the binary: exit codes, artifact layout, error
//! wording, and byte-level idempotence. Every test drives the compiled
//! `lcc` executable the way a shell user would.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lcc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const CASE_A: &str = r#"{
  "schema": "lcc-scenario/1",
  "topology": {"variant": "general", "n": 2, "m": 2},
  "feedback": {"mu": {"-1": 3.0}, "k": {"-1": -3.0}}
}"#;

const TINY_SCAN: &str = r#"{
  "schema": "lcc-scenario/1",
  "topology": {"variant": "general", "n": 2, "m": 2},
  "omega_grid": {"points": 150},
  "scan": {
    "x_gain": {"vehicle": 1, "kind": "mu"},
    "y_gain": {"vehicle": 1, "kind": "k"},
    "x_range": {"min": -4.0, "max": 4.0, "steps": 7},
    "y_range": {"min": -4.0, "max": 4.0, "steps": 7}
  }
}"#;

#[test]
fn analysis_subcommands_write_their_artifacts() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "case-a.json", CASE_A);

    for (cmd, files) in [
        ("equilibrium", vec!["equilibrium.json"]),
        ("linearize", vec!["linearization.json"]),
        ("build", vec!["state_space.json"]),
        ("ctrb", vec!["ctrb_report.json"]),
        ("ss-check", vec!["stability.json", "magnitude.csv"]),
    ] {
        let out = lcc(&[cmd, "--config", "case-a.json", "--out", "art"], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", stderr(&out));
        for f in files {
            assert!(tmp.path().join("art").join(f).exists(), "{cmd} missing {f}");
        }
    }
}

#[test]
fn ctrb_report_carries_rank_and_condition_value() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "fd2.json",
        r#"{"schema": "lcc-scenario/1", "topology": {"variant": "free_driving", "n": 2}}"#,
    );
    let out = lcc(&["ctrb", "--config", "fd2.json", "--out", "art"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("art/ctrb_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["kalman_rank"], 6);
    assert_eq!(report["state_dim"], 6);
    assert_eq!(report["verdict"], "controllable");
    let condition = report["condition_value"].as_f64().unwrap();
    assert!((condition - (0.3 * std::f64::consts::PI - 0.54)).abs() < 1e-12);
}

#[test]
fn ss_check_declares_known_stabilizing_gains_stable() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "case-a.json", CASE_A);
    let out = lcc(
        &["ss-check", "--config", "case-a.json", "--out", "art"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let verdict: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("art/stability.json")).unwrap())
            .unwrap();
    assert_eq!(verdict["string_stable"], "stable");
    assert_eq!(verdict["plant_stable"], "stable");
    assert!(verdict["peak_magnitude"].as_f64().unwrap() < 1.0);
    // Header plus one row per grid point.
    let csv = fs::read_to_string(tmp.path().join("art/magnitude.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
    assert!(csv.starts_with("omega,magnitude_sq\n"));
}

#[test]
fn missing_required_field_exits_one_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "bad.json",
        r#"{"schema": "lcc-scenario/1", "topology": {"variant": "general", "m": 2}}"#,
    );
    let out = lcc(&["build", "--config", "bad.json", "--out", "art"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("topology") && msg.contains("`n`"), "{msg}");
    assert!(!tmp.path().join("art").exists(), "failed run left artifacts");
}

#[test]
fn unknown_key_exits_one_and_names_it() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "typo.json",
        r#"{"schema": "lcc-scenario/1", "topologie": {"variant": "general", "n": 1, "m": 1}}"#,
    );
    let out = lcc(
        &["equilibrium", "--config", "typo.json", "--out", "art"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("topologie"), "{}", stderr(&out));
}

#[test]
fn wrong_schema_version_exits_one() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "v9.json", r#"{"schema": "lcc-scenario/9"}"#);
    let out = lcc(
        &["equilibrium", "--config", "v9.json", "--out", "art"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("schema"), "{}", stderr(&out));
}

#[test]
fn missing_config_file_exits_one() {
    let tmp = TempDir::new().unwrap();
    let out = lcc(
        &["equilibrium", "--config", "nowhere.json", "--out", "art"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nowhere.json"), "{}", stderr(&out));
}

#[test]
fn degenerate_equilibrium_is_an_analysis_error() {
    let tmp = TempDir::new().unwrap();
    // Spacing at the standstill threshold: V'(s*) = 0.
    write_config(
        tmp.path(),
        "degen.json",
        r#"{"schema": "lcc-scenario/1", "equilibrium": {"s_star": 5.0}}"#,
    );
    let out = lcc(
        &["linearize", "--config", "degen.json", "--out", "art"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("degenerate"), "{}", stderr(&out));
}

#[test]
fn plant_unstable_simulation_reports_blowup() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "blowup.json",
        r#"{
          "schema": "lcc-scenario/1",
          "topology": {"variant": "general", "n": 2, "m": 2},
          "feedback": {"k": {"1": 8.0}}
        }"#,
    );
    let out = lcc(
        &["simulate", "--config", "blowup.json", "--out", "art"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("finite range"), "{}", stderr(&out));
}

#[test]
fn string_check_without_head_vehicle_is_an_analysis_error() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "fd.json",
        r#"{"schema": "lcc-scenario/1", "topology": {"variant": "free_driving", "n": 2}}"#,
    );
    let out = lcc(&["ss-check", "--config", "fd.json", "--out", "art"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("head vehicle"), "{}", stderr(&out));
}

#[test]
fn scan_accepts_spec_alias_and_is_idempotent() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "scan.json", TINY_SCAN);
    let first = lcc(&["scan", "--spec", "scan.json", "--out", "a"], tmp.path());
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let second = lcc(
        &["scan", "--config", "scan.json", "--out", "b", "--threads", "1"],
        tmp.path(),
    );
    assert_eq!(second.status.code(), Some(0), "{}", stderr(&second));
    for f in ["chart.csv", "chart.svg"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs/thread counts");
    }
    let csv = fs::read_to_string(tmp.path().join("a/chart.csv")).unwrap();
    assert_eq!(csv.lines().count(), 50, "7x7 cells plus header");
    assert!(csv.starts_with("mu_1,k_1,class\n"));
}

#[test]
fn simulate_is_idempotent_and_layout_matches_topology() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "sim.json",
        r#"{
          "schema": "lcc-scenario/1",
          "topology": {"variant": "general", "n": 1, "m": 1},
          "feedback": {"mu": {"-1": 3.0}, "k": {"-1": -3.0}},
          "simulation": {"mode": "linear", "horizon": 20.0, "dt": 0.01}
        }"#,
    );
    for out_dir in ["a", "b"] {
        let out = lcc(
            &["simulate", "--config", "sim.json", "--out", out_dir],
            tmp.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let a = fs::read(tmp.path().join("a/trajectory.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/trajectory.csv")).unwrap();
    assert_eq!(a, b);

    let text = String::from_utf8(a).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "time,head_velocity,vel_-1,gap_-1,vel_0,gap_0,vel_1,gap_1"
    );
    assert_eq!(text.lines().count(), 2002, "2000 steps plus t=0 plus header");
}

#[test]
fn seed_flag_is_accepted_and_ignored() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "case-a.json", CASE_A);
    let a = lcc(
        &["equilibrium", "--config", "case-a.json", "--out", "a", "--seed", "7"],
        tmp.path(),
    );
    let b = lcc(
        &["equilibrium", "--config", "case-a.json", "--out", "b", "--seed", "8"],
        tmp.path(),
    );
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let a = fs::read(tmp.path().join("a/equilibrium.json")).unwrap();
    let b = fs::read(tmp.path().join("b/equilibrium.json")).unwrap();
    assert_eq!(a, b);
}
