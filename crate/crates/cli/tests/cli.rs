use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use scvx_core::config::bundled;

fn scvx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scvx")).args(args).output().expect("spawn scvx")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Bundled halo case with enough thrust to close the defects at small K.
fn strong_case(dir: &Path) -> String {
    let text = bundled::CR3BP_HALO.replace("thrust_max_n = 0.01", "thrust_max_n = 1.0");
    let path = dir.join("case.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_config_is_a_config_error() {
    let o = scvx(&["run", "--config", "/definitely/not/here.toml"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, bundled::CR3BP_HALO.replace("[scvx]\n", "[scvx]\nbogus = 1\n")).unwrap();
    let o = scvx(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn bad_flag_value_is_a_config_error() {
    let o = scvx(&["run", "--config", "x.toml", "--nl-index", "maybe"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn converged_run_writes_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = strong_case(dir.path());
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|tag| {
            let out = dir.path().join(tag);
            let o = scvx(&["run", "--config", &cfg, "--nodes", "20", "--out-dir", out.to_str().unwrap(), "--seed", "3"]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            out
        })
        .collect();
    for name in [
        "trajectory.csv",
        "iterations.csv",
        "cost_history.csv",
        "trajectory_3d.csv",
        "thrust_profile.csv",
        "mass_profile.csv",
    ] {
        let a = fs::read(outs[0].join(name)).unwrap();
        let b = fs::read(outs[1].join(name)).unwrap();
        assert!(a == b, "{name} differs between identical runs");
    }
    let summary = scvx_core::report::read_summary(&outs[0].join("summary.toml")).unwrap();
    assert!(summary.converged);
    assert_eq!(summary.nodes, 20);
    assert_eq!(summary.seed, 3);
    assert!(fs::read_to_string(outs[0].join("config.toml")).unwrap().contains("nodes = 20"));
}

#[test]
fn iteration_budget_exhaustion_exits_two_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = scvx(&[
        "run",
        "--config",
        &strong_case(dir.path()),
        "--nodes",
        "15",
        "--max-iters",
        "1",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let iterations = fs::read_to_string(out.join("iterations.csv")).unwrap();
    assert_eq!(iterations.lines().count(), 2);
    assert!(out.join("trajectory.csv").is_file());
}

#[test]
fn dumped_subproblem_solves_again() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = scvx(&[
        "run",
        "--config",
        &strong_case(dir.path()),
        "--nodes",
        "12",
        "--max-iters",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
        "--dump-subproblems",
    ]);
    assert!(matches!(code(&o), 0 | 2));
    let dump = out.join("subproblems").join("subproblem_001.txt");
    let o = scvx(&["solve-dump", dump.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("status optimal"));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let text = bundled::CR3BP_SWEEP
        .replace("thrust_max_n = 0.01", "thrust_max_n = 1.0")
        .replace("nodes = [25, 50, 100, 200, 400, 1000]", "nodes = [10, 14]");
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("sweep");
    let o = scvx(&["sweep", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--max-iters", "40"]);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 4);
}

#[test]
fn sweep_config_rejected_by_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, bundled::CR3BP_SWEEP).unwrap();
    assert_eq!(code(&scvx(&["run", "--config", cfg.to_str().unwrap()])), 3);
}
