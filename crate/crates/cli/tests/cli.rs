use std::path::PathBuf;
use std::process::{Command, Output};

use setobs_core::sdp::parse_sdpa;

fn setobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setobs")).args(args).output().unwrap()
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("setobs-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn run_writes_outputs() {
    let dir = scratch("run");
    let out = setobs(&["run", "--config", "test_system_a", "--seed", "3", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["steps.csv", "report.txt", "report.json", "thresholds_q1.csv", "plot.gp", "surviving.dat"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let steps = std::fs::read_to_string(dir.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 1 + 101);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(json.is_object());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_mode_exits_with_config_code() {
    let out = setobs(&["export-sdp", "--config", "test_system_a", "--mode", "9"]);
    assert_eq!(out.status.code(), Some(2));
    let out = setobs(&["run", "--config", "no_such_scenario"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_sdp_round_trips() {
    let dir = scratch("sdp");
    let out = setobs(&["export-sdp", "--config", "scenario1", "--mode", "2", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for tag in ["A", "B"] {
        let text = std::fs::read_to_string(dir.join(format!("sdp_q2_branch_{tag}.dat-s"))).unwrap();
        let parsed = parse_sdpa(&text).unwrap();
        assert!(parsed.m > 0);
        assert!(!parsed.entries.is_empty());
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn detectability_flags_duplicate_modes() {
    let dir = scratch("det");
    let out = setobs(&["check-detectability", "--config", "duplicate_modes", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("detectability.json")).unwrap()).unwrap();
    let text = std::fs::read_to_string(dir.join("detectability.txt")).unwrap();
    assert!(json.is_object());
    assert!(text.to_lowercase().contains("fail"), "{text}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn thresholds_prints_table() {
    let out = setobs(&["thresholds", "--config", "test_system_a", "--mode", "1", "--kmax", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("k,"));
    assert_eq!(csv.lines().count(), 1 + 5);
    let out = setobs(&["thresholds", "--config", "test_system_a", "--mode", "1", "--kmax", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
