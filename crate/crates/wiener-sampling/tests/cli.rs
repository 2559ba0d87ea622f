//! Black-box tests of the `wsamp` binary: output shapes, exit codes, and
//! byte-level determinism of file emission.

use std::path::Path;
use std::process::{Command, Output};

fn wsamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsamp"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn wsamp_with_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsamp"))
        .env("RAYON_NUM_THREADS", threads)
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout should be JSON")
}

#[test]
fn solve_unit_deterministic_delay() {
    let v = stdout_json(&wsamp(&["solve", "--delay", "det:1"]));
    let gamma = v["gamma_star"].as_f64().unwrap();
    assert!((gamma - 0.398049261).abs() < 1e-6, "gamma_star = {gamma}");
    assert_eq!(v["nu_star"].as_f64().unwrap(), 0.0);
    let mse = v["mse_opt"].as_f64().unwrap();
    assert!((mse - (gamma + 1.0)).abs() < 1e-12);
    assert!(v["residual"].as_f64().unwrap().abs() < 1e-8);
    // Exactly the six documented keys (parsed maps are alphabetized).
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    assert_eq!(
        keys,
        ["frame_length_star", "gamma_star", "mse_opt", "nu_star", "residual", "tau_star"]
    );
}

#[test]
fn solve_zero_delay_is_all_zero() {
    let v = stdout_json(&wsamp(&["solve", "--delay", "det:0"]));
    assert_eq!(v["gamma_star"].as_f64().unwrap(), 0.0);
    assert_eq!(v["tau_star"].as_f64().unwrap(), 0.0);
    assert_eq!(v["mse_opt"].as_f64().unwrap(), 0.0);
}

#[test]
fn solve_budget_binds_frame_length() {
    let v = stdout_json(&wsamp(&["solve", "--delay", "lognormal:0.8,1.2", "--fmax", "auto10"]));
    let target = 10.0 * (0.8f64 + 0.72).exp();
    let l = v["frame_length_star"].as_f64().unwrap();
    assert!(
        ((l - target) / target).abs() < 1e-6,
        "frame_length_star {l} vs 10*mean {target}"
    );
    assert!(v["nu_star"].as_f64().unwrap() > 0.0, "budget should bind");
}

#[test]
fn exit_codes() {
    // Usage errors exit 1.
    assert_eq!(wsamp(&["solve", "--delay", "bogus:1"]).status.code(), Some(1));
    assert_eq!(wsamp(&["solve"]).status.code(), Some(1));
    assert_eq!(wsamp(&["simulate", "--delay", "det:1"]).status.code(), Some(1));
    assert_eq!(
        wsamp(&["simulate", "--delay", "det:1", "--policy", "online", "--frames", "10", "--alpha", "0.3"])
            .status
            .code(),
        Some(1)
    );
    // Help is not an error.
    assert_eq!(wsamp(&["--help"]).status.code(), Some(0));
    // I/O failures exit 3: the output "directory" is an existing file.
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let out = wsamp(&[
        "simulate",
        "--delay",
        "det:1",
        "--policy",
        "zerowait",
        "--frames",
        "10",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_surfaces_coarse_step_and_fails() {
    let out = wsamp(&["validate", "--step", "0.5"]);
    assert_eq!(out.status.code(), Some(4));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("too coarse"),
        "expected a coarse-step warning line, got:\n{text}"
    );
    assert!(text.contains("FAIL step-resolution"));
}

fn read_sorted_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let base = tempfile::tempdir().unwrap();
    let dirs = [base.path().join("a"), base.path().join("b"), base.path().join("c")];
    let run = |dir: &Path, threads: &str| {
        let out = wsamp_with_threads(
            &[
                "simulate",
                "--delay",
                "uniform:0,1",
                "--policy",
                "online",
                "--frames",
                "2000",
                "--reps",
                "3",
                "--seed",
                "5",
                "--out",
                dir.to_str().unwrap(),
            ],
            threads,
        );
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&dirs[0], "1");
    run(&dirs[1], "1");
    run(&dirs[2], "2");

    let a = read_sorted_csvs(&dirs[0]);
    let b = read_sorted_csvs(&dirs[1]);
    let c = read_sorted_csvs(&dirs[2]);
    assert_eq!(a.len(), 3, "one CSV per replication");
    assert_eq!(a, b, "same seed, same thread count");
    assert_eq!(a, c, "same seed, different thread count");

    let text = String::from_utf8(a[0].1.clone()).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "k,S_k,D_k,W_k,L_k,gamma_k,nu_k,U_k,deltaX_delivery,deltaX_frame,\
         err_path,err_mart,cum_err,timeavg_mse,regret"
    );
    assert_eq!(text.lines().count(), 2001);
}

#[test]
fn regret_emits_series_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = wsamp(&[
        "regret",
        "--delay",
        "det:1",
        "--policy",
        "optimal",
        "--frames",
        "500",
        "--reps",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("regret.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "k,regret");
    assert_eq!(text.lines().count(), 501);
    // Stdout reports the final point as JSON.
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["k"].as_u64().unwrap(), 500);
}

#[test]
fn simulate_summary_reports_solution_and_per_rep_values() {
    let out = wsamp(&[
        "simulate", "--delay", "det:1", "--policy", "const:0.7", "--frames", "1000", "--reps", "2",
    ]);
    let v = stdout_json(&out);
    let runs = v.as_array().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0]["policy"].as_str().unwrap(), "const0.7");
    assert_eq!(runs[0]["per_rep_final_timeavg_mse"].as_array().unwrap().len(), 2);
    let mean = runs[0]["final_timeavg_mse_mean"].as_f64().unwrap();
    // Analytic long-run value for this baseline is 1.85.
    assert!((mean - 1.85).abs() < 0.25, "time-average MSE {mean}");
}
