use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ecsmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecsmr")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fig1_prints_both_orders_with_responses() {
    let out = ecsmr(&["fig1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("bfs: [o1,o2,o3,o4,o5,o6,o7]"), "{text}");
    assert!(text.contains("fair: [o1,o2,o3,o5,o7,o4,o6]"), "{text}");
    let (bfs, fair) = text.split_once("fair:").unwrap();
    let bottoms =
        |s: &str| s.lines().filter(|l| l.ends_with('⊥')).map(|l| l.trim()[..2].to_owned()).collect::<Vec<_>>();
    assert_eq!(bottoms(bfs), ["o5", "o7"]);
    assert_eq!(bottoms(fair), ["o4"]);
}

#[test]
fn empty_scenario_passes_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, report) = (dir.path().join("t.jsonl"), dir.path().join("r.json"));
    let out = ecsmr(&[
        "run",
        "--scenario",
        "empty",
        "--seed",
        "9",
        "--recon",
        "bfs",
        "--trace-out",
        trace.to_str().unwrap(),
        "--report-out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let r = read_json(&report);
    assert_eq!(r["config"]["scenario"]["seed"], 9);
    assert_eq!(r["config"]["scenario"]["recon"], "bfs");
    assert_eq!(r["report"]["passed"], true);
    assert_eq!(r["report"]["stability"]["stable_prefix"], Value::Array(vec![]));
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().count(), 2, "header and end");
}

#[test]
fn check_reproduces_run_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let (ran, checked) = (dir.path().join("run.json"), dir.path().join("check.json"));
    let run = ecsmr(&[
        "run",
        "--scenario",
        "starvation",
        "--window",
        "5",
        "--trace-out",
        trace.to_str().unwrap(),
        "--report-out",
        ran.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(1), "bfs starves replica 2");
    let check = ecsmr(&[
        "check",
        "--trace",
        trace.to_str().unwrap(),
        "--window",
        "5",
        "--report-out",
        checked.to_str().unwrap(),
    ]);
    assert_eq!(check.status.code(), Some(1));
    assert_eq!(read_json(&ran)["report"], read_json(&checked)["report"]);
    assert_eq!(read_json(&ran)["report"]["fairness"]["starvation"]["2"]["status"], "fail");
}

#[test]
fn scenario_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, ecsmr_core::sim::fixtures::starvation().to_json()).unwrap();
    let out = ecsmr(&["run", "--scenario", path.to_str().unwrap(), "--recon", "fair", "--window", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("recon=fair"));
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(ecsmr(&["run", "--scenario", "no-such-scenario"]).status.code(), Some(2));
    assert_eq!(ecsmr(&["run", "--scenario", "empty", "--recon", "random"]).status.code(), Some(2));
    assert_eq!(ecsmr(&["frobnicate"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"n": 0, "datatype": "nfs", "recon": "bfs", "delay": {"min": 1, "max": 1}, "workload": {"explicit": []}}"#,
    )
    .unwrap();
    assert_eq!(ecsmr(&["run", "--scenario", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(ecsmr(&["check", "--trace", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn fuzz_aggregates_per_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("f.json");
    let out = ecsmr(&[
        "fuzz",
        "--scenario",
        "standard_random",
        "--recon",
        "fair",
        "--seeds",
        "8",
        "--window",
        "0",
        "--report-out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let r = read_json(&report);
    assert_eq!(r["runs"], 8);
    assert_eq!(r["verdicts"]["convergence"]["pass"], 8);
    assert_eq!(r["verdicts"]["fairness"]["pass"], 8);
    assert_eq!(r["config"]["options"]["window"], 0);
}
