//! Command-line behaviour: exit codes, filters, and output sets.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pdterm")
}

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper.toml")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pdterm-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn missing_config_file_exits_3() {
    let out = Command::new(bin())
        .args(["run", "--config", "/nonexistent/nope.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn malformed_config_exits_3_with_diagnostics() {
    let dir = temp_dir("badcfg");
    let path = dir.join("bad.toml");
    std::fs::write(&path, "[portfolio]\ncounts = [1, 2\n").unwrap();
    let out = Command::new(bin())
        .args(["run", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error[config]"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = Command::new(bin())
        .args(["run", "--config", "x.toml", "--frobnicate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let out = Command::new(bin()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_scenario_filter_exits_3() {
    let out = Command::new(bin())
        .args([
            "run",
            "--config",
            config_path().to_str().unwrap(),
            "--scenario",
            "meteor",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn runtime_failure_exits_1() {
    // an absurdly small exponent cap trips the overflow guard mid-run
    let dir = temp_dir("runtime");
    let text = std::fs::read_to_string(config_path())
        .unwrap()
        .replace("exponent_cap = 50.0", "exponent_cap = 0.01");
    let path = dir.join("tight.toml");
    std::fs::write(&path, text).unwrap();
    let out = Command::new(bin())
        .args([
            "run",
            "--config",
            path.to_str().unwrap(),
            "--out",
            dir.join("out").to_str().unwrap(),
            "--reps",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds cap"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn method_and_scenario_filters_select_one_cell() {
    let dir = temp_dir("filter");
    let status = Command::new(bin())
        .args([
            "run",
            "--config",
            config_path().to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--reps",
            "3",
            "--method",
            "anchored",
            "--scenario",
            "stress",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    // header + one cell + one pooled row
    assert_eq!(lines.len(), 3, "summary: {summary}");
    assert!(lines[1].starts_with("stress,anchored,"));
    assert!(dir.join("pd_stress_anchored.csv").exists());
    assert!(!dir.join("pd_stress_naive.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn scenarios_subcommand_writes_macro_csvs_only() {
    let dir = temp_dir("scen");
    let status = Command::new(bin())
        .args([
            "scenarios",
            "--config",
            config_path().to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["baseline", "stress", "pandemic"] {
        let text = std::fs::read_to_string(dir.join(format!("macro_{name}.csv"))).unwrap();
        assert!(text.starts_with(
            "t,gdp_forecast,unemp_forecast,gdp_realized,unemp_realized,M_forecast,M_realized"
        ));
        assert_eq!(text.lines().count(), 21); // header + 20 quarters
    }
    assert!(!dir.join("summary.csv").exists());
    assert!(dir.join("manifest.txt").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn riccati_subcommand_prints_both_solutions() {
    let out = Command::new(bin())
        .args(["riccati", "--config", config_path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("naive:"));
    assert!(stdout.contains("anchored:"));
    assert!(stdout.contains("closed-loop radius"));
    // scalar reference values for the bundled calibration
    assert!(stdout.contains("1.3647629253375"));
    assert!(stdout.contains("2.9356175837262"));
}

#[test]
fn emit_traces_writes_per_replication_files() {
    let dir = temp_dir("traces");
    let status = Command::new(bin())
        .args([
            "run",
            "--config",
            config_path().to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--reps",
            "2",
            "--scenario",
            "baseline",
            "--emit-traces",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let reps = std::fs::read_to_string(dir.join("pd_baseline_anchored_reps.csv")).unwrap();
    assert!(reps.starts_with("replication,t,Y_t"));
    assert_eq!(reps.lines().count(), 1 + 2 * 40);
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("master_seed = 42"));
    assert!(manifest.contains("config_fnv1a = "));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_override_changes_outputs() {
    let dir_a = temp_dir("seed-a");
    let dir_b = temp_dir("seed-b");
    for (dir, seed) in [(&dir_a, "1"), (&dir_b, "2")] {
        let status = Command::new(bin())
            .args([
                "run",
                "--config",
                config_path().to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
                "--reps",
                "5",
                "--seed",
                seed,
                "--scenario",
                "baseline",
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read_to_string(dir_a.join("summary.csv")).unwrap();
    let b = std::fs::read_to_string(dir_b.join("summary.csv")).unwrap();
    assert_ne!(a, b);
    std::fs::remove_dir_all(&dir_a).ok();
    std::fs::remove_dir_all(&dir_b).ok();
}
