//! Smoke tests of the pipeline binary against the bundled fixture.

use std::path::Path;
use std::process::{Command, Output};

fn fixture_config() -> String {
    format!(
        "{}/../../fixtures/problem_small.json",
        env!("CARGO_MANIFEST_DIR")
    )
}

fn qdpo(out_dir: &Path, seed: u64, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdpo"))
        .arg("--config")
        .arg(fixture_config())
        .arg("--out")
        .arg(out_dir)
        .arg("--seed")
        .arg(seed.to_string())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(out_dir: &Path, seed: u64, args: &[&str]) {
    let output = qdpo(out_dir, seed, args);
    assert!(
        output.status.success(),
        "`{args:?}` failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn solve_vqe_writes_samples_matching_shots() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), 11, &["ingest"]);
    run_ok(dir.path(), 11, &["build"]);
    run_ok(dir.path(), 11, &["solve-vqe", "--shots", "512"]);

    let samples = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let mut lines = samples.lines();
    assert_eq!(lines.next(), Some("bitstring,count"));
    let mut total = 0u64;
    for line in lines {
        let (bits, count) = line.split_once(',').unwrap();
        assert_eq!(bits.len(), 8);
        total += count.parse::<u64>().unwrap();
    }
    assert_eq!(total, 512);
    for name in ["ansatz.json", "history.csv", "theta.json", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn solve_vqec_writes_per_step_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), 5, &["ingest"]);
    run_ok(dir.path(), 5, &["build"]);
    run_ok(
        dir.path(),
        5,
        &["solve-vqec", "--shots", "256", "--generations", "8"],
    );
    for t in 0..2 {
        for prefix in ["objective_t", "history_t", "theta_t", "samples_t"] {
            let ext = if prefix.contains("history") || prefix.contains("samples") {
                "csv"
            } else {
                "json"
            };
            let name = format!("{prefix}{t}.{ext}");
            assert!(dir.path().join(&name).exists(), "{name} missing");
        }
    }
    let strategy = std::fs::read_to_string(dir.path().join("strategy.json")).unwrap();
    assert!(strategy.contains("\"normalized\": true"));
}

#[test]
fn report_contains_expected_solver_rows() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), 3, &["ingest"]);
    run_ok(dir.path(), 3, &["build"]);
    run_ok(dir.path(), 3, &["solve-vqe", "--shots", "512"]);
    run_ok(dir.path(), 3, &["isqr"]);
    run_ok(dir.path(), 3, &["baseline", "--draws", "20000"]);
    run_ok(dir.path(), 3, &["report", "--sweeps", "500"]);

    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let solvers: Vec<&str> = report
        .lines()
        .skip(1)
        .map(|line| line.split(',').next().unwrap())
        .collect();
    assert_eq!(solvers, vec!["raw", "isqr", "random", "sa", "exhaustive"]);

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert!(json["offset"].is_number());
    assert_eq!(json["rows"].as_array().unwrap().len(), 5);
    // sa and exhaustive are single solutions: no below-offset fraction.
    assert!(json["rows"][3]["pct_below_offset"].is_null());
    let financial = json["financial"].as_array().unwrap();
    assert!(financial.iter().any(|f| f["solver"] == "isqr"));
}

#[test]
fn frontier_emits_plot_ready_csv() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), 9, &["ingest"]);
    run_ok(dir.path(), 9, &["build"]);
    run_ok(dir.path(), 9, &["frontier", "--points", "9"]);
    for t in 0..2 {
        let text =
            std::fs::read_to_string(dir.path().join(format!("frontier_t{t}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("volatility,return"));
        assert!(lines.count() >= 1);
    }
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let output = Command::new(env!("CARGO_BIN_EXE_qdpo"))
        .arg("frobnicate")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("Usage"), "no usage text: {stderr}");
}

#[test]
fn missing_artifact_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    // `build` without `ingest` has no tensors to read.
    let output = qdpo(dir.path(), 1, &["build"]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let json: serde_json::Value =
        serde_json::from_str(stderr.lines().last().unwrap()).expect("stderr is JSON");
    assert!(json["error"]["message"]
        .as_str()
        .unwrap()
        .contains("tensors.json"));
}

#[test]
fn manifest_records_every_file() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), 2, &["ingest"]);
    run_ok(dir.path(), 2, &["build"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let entries = manifest.as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["subcommand"], "ingest");
    assert_eq!(entries[1]["subcommand"], "build");
    let build_files: Vec<&str> = entries[1]["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    assert_eq!(build_files, vec!["problem.json", "qubo.json", "ising.json"]);
    for file in entries[1]["files"].as_array().unwrap() {
        assert_eq!(file["sha256"].as_str().unwrap().len(), 64);
    }
}
