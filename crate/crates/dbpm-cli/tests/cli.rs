//! End-to-end checks of the command line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dbpm"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dbpm_cli_{name}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let config = serde_json::json!({
        "problem": "quadratic",
        "n_agents": 3,
        "dim": 4,
        "blocks": [2],
        "stepsize_mode": "fixed",
        "stepsize": 0.05,
        "p_on": 0.9,
        "er_p": 0.8,
        "horizon": 50,
        "seeds": [0],
        "output_dir": dir.join("out").to_string_lossy(),
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn run_ok(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn run_without_config_or_paper_is_a_usage_error() {
    let output = bin().arg("run").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = scratch("badcfg");
    let path = dir.join("config.json");
    fs::write(&path, "{\"no_such_field\": true}").unwrap();
    let output = bin().arg("run").arg("--config").arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    fs::write(&path, "{\"lambda\": -3.0}").unwrap();
    let output = bin().arg("run").arg("--config").arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn run_writes_traces_and_is_byte_deterministic() {
    let dir = scratch("run");
    let config = write_tiny_config(&dir);
    let output = bin().arg("run").arg("--config").arg(&config).output().unwrap();
    run_ok(&output);
    let trace_path = dir.join("out/trace_B2_seed0.csv");
    let first = fs::read(&trace_path).unwrap();
    assert!(dir.join("out/trace_B2_seed0.meta.json").exists());
    assert!(dir.join("out/summary.csv").exists());
    assert!(dir.join("out/normalized_B2.csv").exists());

    let output = bin().arg("run").arg("--config").arg(&config).output().unwrap();
    run_ok(&output);
    assert_eq!(first, fs::read(&trace_path).unwrap());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn out_flag_and_env_var_override_the_output_dir() {
    let dir = scratch("outdir");
    let config = write_tiny_config(&dir);

    let flag_dir = dir.join("flagged");
    let output = bin()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&flag_dir)
        .output()
        .unwrap();
    run_ok(&output);
    assert!(flag_dir.join("trace_B2_seed0.csv").exists());

    let env_dir = dir.join("enved");
    let output = bin()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .env("DBPM_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    run_ok(&output);
    assert!(env_dir.join("trace_B2_seed0.csv").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn seeds_flag_overrides_the_seed_list() {
    let dir = scratch("seeds");
    let config = write_tiny_config(&dir);
    let output = bin()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--seeds")
        .arg("2")
        .output()
        .unwrap();
    run_ok(&output);
    assert!(dir.join("out/trace_B2_seed0.csv").exists());
    assert!(dir.join("out/trace_B2_seed1.csv").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn fstar_prints_the_reference_cost() {
    let dir = scratch("fstar");
    let config = write_tiny_config(&dir);
    let output = bin().arg("fstar").arg("--config").arg(&config).output().unwrap();
    run_ok(&output);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("seed=0 f_star="), "stdout: {stdout}");
    assert!(stdout.contains("certified=true"), "stdout: {stdout}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn sweep_writes_summary_and_rejects_regime_breakers() {
    let dir = scratch("sweep");
    let config = write_tiny_config(&dir);
    let output = bin()
        .arg("sweep")
        .arg("--config")
        .arg(&config)
        .arg("--factors")
        .arg("1,0.5")
        .output()
        .unwrap();
    run_ok(&output);
    let summary = fs::read_to_string(dir.join("out/sweep_summary.csv")).unwrap();
    assert!(summary.starts_with("factor,floor,slope\n"));
    assert_eq!(summary.lines().count(), 3);

    // curvature 1 caps the regime at stepsize 1; factor 40 * 0.05 = 2
    let output = bin()
        .arg("sweep")
        .arg("--config")
        .arg(&config)
        .arg("--factors")
        .arg("40")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("regime"), "stderr: {stderr}");
    let _ = fs::remove_dir_all(&dir);
}
