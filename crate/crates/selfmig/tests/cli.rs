use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use selfmig::instance_file::load_instance;
use selfmig_core::lp::{LpModel, SlotOptions};

fn selfmig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfmig")).args(args).output().expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn generated_run(dir: &Path, extra: &[&str]) -> PathBuf {
    let instance = path(dir, "instance.json");
    let mut args = vec!["generate", "--machines", "3", "--jobs", "15", "--seed", "5", "--out", &instance];
    args.extend_from_slice(extra);
    assert_eq!(selfmig(&args).status.code(), Some(0));
    let d = dir.to_str().unwrap();
    let out = selfmig(&["run", "--instance", &instance, "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("events.jsonl")
}

#[test]
fn certify_accepts_an_untampered_run() {
    let dir = tempfile::tempdir().unwrap();
    let log = generated_run(dir.path(), &[]);
    let out = selfmig(&["certify", "--log", log.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], Value::Bool(true));
    assert!(report["checks"].as_array().unwrap().len() >= 12);
}

#[test]
fn certify_rejects_a_perturbed_rate() {
    let dir = tempfile::tempdir().unwrap();
    let log = generated_run(dir.path(), &[]);
    let text = std::fs::read_to_string(&log).unwrap();
    let mut done = false;
    let lines: Vec<String> = text
        .lines()
        .map(|line| {
            let mut v: Value = serde_json::from_str(line).unwrap();
            if !done && v["type"] == "interval" && !v["jobs"].as_array().unwrap().is_empty() {
                let nu = v["jobs"][0]["nu"].as_f64().unwrap();
                v["jobs"][0]["nu"] = Value::from(nu * (1.0 + 1e-3));
                done = true;
            }
            serde_json::to_string(&v).unwrap()
        })
        .collect();
    assert!(done);
    let tampered = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    let report = path(dir.path(), "tampered-report.json");
    let out = selfmig(&["certify", "--log", tampered.to_str().unwrap(), "--out", &report]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("replay"), "{stderr}");
    assert!(stderr.contains("rate"), "{stderr}");
}

#[test]
fn certify_rejects_a_truncated_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = generated_run(dir.path(), &[]);
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let cut = dir.path().join("cut.jsonl");
    std::fs::write(&cut, lines[..lines.len() / 2].join("\n") + "\n").unwrap();
    let out = selfmig(&["certify", "--log", cut.to_str().unwrap(), "--out", &path(dir.path(), "cut.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replay"));
}

#[test]
fn compare_writes_one_row_per_scheduler() {
    let dir = tempfile::tempdir().unwrap();
    generated_run(dir.path(), &[]);
    let csv = path(dir.path(), "compare.csv");
    let out = selfmig(&["compare", "--instance", &path(dir.path(), "instance.json"), "--epsilon", "1", "--out", &csv]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(
        rows[0],
        ["scheduler", "status", "weighted_flow", "energy", "total_migrations", "max_migrations", "makespan"]
    );
    let names: Vec<&str> = rows[1..].iter().map(|r| r[0]).collect();
    assert_eq!(names, ["selfish-migrate", "wrr-k0", "non-migratory"]);
    assert!(rows[1..].iter().all(|r| r.len() == 7 && r[1] == "ok"));
    assert_eq!(rows[3][4], "0");
}

#[test]
fn compare_marks_non_migratory_unsupported_in_energy_mode() {
    let dir = tempfile::tempdir().unwrap();
    generated_run(dir.path(), &["--mode", "energy", "--gamma", "2,3"]);
    let out = selfmig(&["compare", "--instance", &path(dir.path(), "instance.json")]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("non-migratory,unsupported"), "{last}");
    assert!(!text.lines().nth(1).unwrap().split(',').nth(3).unwrap().is_empty());
}

#[test]
fn export_lp_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let instance = path(dir.path(), "tiny.json");
    assert_eq!(
        selfmig(&["generate", "--machines", "2", "--jobs", "3", "--seed", "1", "--out", &instance]).status.code(),
        Some(0)
    );
    let lp = path(dir.path(), "tiny.lp");
    let out = selfmig(&["export-lp", "--instance", &instance, "--slot-length", "0.5", "--out", &lp]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed = LpModel::parse(&std::fs::read_to_string(&lp).unwrap()).unwrap();
    let inst = load_instance(Path::new(&instance)).unwrap();
    assert_eq!(parsed, LpModel::time_slotted(&inst, &SlotOptions::new(0.5)).unwrap());
}

#[test]
fn validation_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = path(dir.path(), "bad.json");
    std::fs::write(
        &bad,
        r#"{"version":1,"machines":1,"mode":"flow","jobs":[{"id":"stuck","release":"0","size":"1","weight":1,"rates":["0"]}]}"#,
    )
    .unwrap();
    let out = selfmig(&["run", "--instance", &bad, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stuck"));

    assert_eq!(selfmig(&["run", "--instance", &path(dir.path(), "missing.json")]).status.code(), Some(1));
    assert_eq!(selfmig(&["run", "--bogus-flag"]).status.code(), Some(1));

    let good = path(dir.path(), "good.json");
    assert_eq!(selfmig(&["generate", "--out", &good]).status.code(), Some(0));
    assert_eq!(selfmig(&["run", "--instance", &good, "--epsilon", "0.3"]).status.code(), Some(1));
    assert_eq!(selfmig(&["run", "--instance", &good, "--mode", "energy"]).status.code(), Some(1));
    assert_eq!(selfmig(&["run", "--instance", &good, "--speed-factor", "0.5"]).status.code(), Some(1));
}

#[test]
fn suite_subcommand_prints_a_table() {
    let out = selfmig(&[
        "suite",
        "--instances",
        "3",
        "--migration-instances",
        "2",
        "--tiny-fixtures",
        "2",
        "--samples",
        "20",
        "--queues",
        "20",
        "--determinism-seeds",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 12);
}
