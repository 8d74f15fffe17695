//! Exercises the installed binary end to end: exit codes, output files,
//! probing guardrails.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_miniscope"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .env_remove("MINISCOPE_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn gen_corpus(dir: &Path, count: usize, seed: u64) {
    let out = run(
        &["gen", "--out", "corpus", "--count", &count.to_string(), "--seed", &seed.to_string()],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn scan_empty_directory_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let out = run(&["scan", "empty", "--no-probe", "--out", "result"], dir.path());
    assert!(out.status.success());
    let report = std::fs::read_to_string(dir.path().join("result/report.jsonl")).unwrap();
    assert!(report.is_empty());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("result/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["total_apps"], 0);
}

#[test]
fn no_probe_scan_is_deterministic_and_unvalidated() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(dir.path(), 12, 3);
    for out_dir in ["a", "b"] {
        let out = run(&["scan", "corpus", "--no-probe", "--out", out_dir], dir.path());
        assert!(out.status.success());
    }
    let a = std::fs::read_to_string(dir.path().join("a/report.jsonl")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/report.jsonl")).unwrap();
    // scanned_at differs between runs; everything else must not.
    let strip = |text: &str| -> Vec<serde_json::Value> {
        text.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("scanned_at");
                v
            })
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
    for report in strip(&a) {
        assert_eq!(report["secret_validity"], "unvalidated");
    }
}

#[test]
fn fail_on_findings_sets_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(dir.path(), 12, 3);
    let out = run(
        &["scan", "corpus", "--no-probe", "--fail-on-findings", "--out", "r"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_loopback_endpoint_requires_acknowledgement() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(dir.path(), 4, 1);
    let out = run(
        &["scan", "corpus", "--endpoint", "http://203.0.113.1:8080", "--out", "r"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line: serde_json::Value =
        serde_json::from_str(stderr.lines().next().unwrap()).expect("machine-readable error");
    assert!(line["error"].as_str().unwrap().contains("--i-own-these-apps"));
}

#[test]
fn env_endpoint_is_overridden_by_flag_and_no_probe() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(dir.path(), 4, 1);
    // A non-loopback env endpoint would normally demand the ownership
    // acknowledgement, but --no-probe disables probing entirely.
    let out = bin()
        .args(["scan", "corpus", "--no-probe", "--out", "r"])
        .current_dir(dir.path())
        .env("MINISCOPE_ENDPOINT", "http://203.0.113.1:8080")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_reports_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let out = run(
        &["scan", "empty", "--catalog", "/nonexistent/catalog.json", "--out", "r"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line: serde_json::Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert!(line["error"].is_string());
}

#[test]
fn diff_of_identical_snapshots_is_all_same_or_clean() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(dir.path(), 8, 2);
    let out = run(&["scan", "corpus", "--no-probe", "--out", "r"], dir.path());
    assert!(out.status.success());
    let out = run(
        &["diff", "r/report.jsonl", "r/report.jsonl", "--out", "diff.json"],
        dir.path(),
    );
    assert!(out.status.success());
    let diff: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("diff.json")).unwrap()).unwrap();
    for transition in diff["transitions"].as_object().unwrap().values() {
        // Unvalidated secrets in both epochs are never "still valid".
        assert!(
            transition == "UNCHANGED_CLEAN" || transition == "INVALIDATED_REMOVED",
            "unexpected transition {transition}"
        );
    }
}

#[test]
fn catalog_check_rejects_broken_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, b"{\"platform\": \"x\"}").unwrap();
    let out = run(&["catalog-check", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
