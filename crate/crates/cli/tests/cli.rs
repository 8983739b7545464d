//! End-to-end checks of the `kinwave` binary: exit codes, output files,
//! and metadata completeness.

use std::fs;
use std::path::Path;
use std::process::Command;

use kinwave_core::harness::section_iv_scenario;

fn kinwave() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kinwave"))
}

fn write_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("riemann.scenario");
    fs::write(&path, section_iv_scenario().to_key_values()).unwrap();
    path
}

#[test]
fn run_writes_csv_and_metadata_for_every_solver() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    for (solver, csv) in [("euler", "euler.csv"), ("lag1", "lag1.csv"), ("lag2", "lag2.csv")] {
        let out = dir.path().join(solver);
        let status = kinwave()
            .args(["run"])
            .arg(&scenario)
            .args(["--solver", solver, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "{solver} run failed");
        let data = fs::read_to_string(out.join(csv)).unwrap();
        assert!(data.lines().count() > 1, "{csv} has no rows");
        let meta = fs::read_to_string(out.join("run_metadata.txt")).unwrap();
        // Every default must be echoed back.
        for key in ["dt =", "dn =", "v_free_ptw =", "eff_length_car =", "epsilon_space ="] {
            assert!(meta.contains(key), "metadata missing {key}");
        }
        assert!(meta.contains(&format!("solver = {solver}")));
    }
}

#[test]
fn lag2_run_honors_reference_class_flag() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    let out = dir.path().join("lag2_car");
    let status = kinwave()
        .args(["run"])
        .arg(&scenario)
        .args(["--solver", "lag2", "--ref-class", "car", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let meta = fs::read_to_string(out.join("run_metadata.txt")).unwrap();
    assert!(meta.contains("ref_class = car"));
    let data = fs::read_to_string(out.join("lag2.csv")).unwrap();
    assert!(data.starts_with("t,class,cluster_index"));
    assert!(data.lines().nth(1).unwrap().split(',').nth(1) == Some("car"));
}

#[test]
fn validate_reports_pass_and_fail_through_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_scenario(dir.path());
    assert!(kinwave().args(["validate"]).arg(&good).status().unwrap().success());

    let bad = dir.path().join("bad.scenario");
    let mut cfg = section_iv_scenario();
    cfg.dt = 100.0; // violates the CFL pre-check
    fs::write(&bad, cfg.to_key_values()).unwrap();
    assert!(!kinwave().args(["validate"]).arg(&bad).status().unwrap().success());

    let missing = dir.path().join("missing.scenario");
    assert!(!kinwave().args(["validate"]).arg(&missing).status().unwrap().success());
}

#[test]
fn experiment_rejects_unknown_names() {
    let dir = tempfile::tempdir().unwrap();
    let status = kinwave()
        .args(["experiment", "not_an_experiment", "--out"])
        .arg(dir.path().join("x"))
        .status()
        .unwrap();
    assert!(!status.success());
}

#[test]
fn experiment_runs_and_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    let status = kinwave()
        .args(["experiment", "refinement_study", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.contains("l1_dn_7.5_ptw"));
}
