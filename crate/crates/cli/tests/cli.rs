//! End-to-end tests that drive the binary the way a user would: write a
//! configuration, run subcommands, inspect the artifacts and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nonstoch_core::datadriven::EmpiricalRangeModel;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonstoch-ais"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn strip_config(dir: &Path, extra: &str) -> PathBuf {
    let json = format!(
        r#"{{
  "env": {{"kind": "wall-strip", "grid": {{"horizon": 2, "initial_agent": [0, 2], "replicates": 8, "seed": 7}}}},
  "abstraction": {{"kind": "info-state"}},
  "baseline": {{"kind": "quantized"}}{extra}
}}"#
    );
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = strip_config(dir.path(), "");
    let cfg = config.to_str().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(&["solve", "--config", cfg, "--out", out_a.to_str().unwrap()]);
    run_ok(&["solve", "--config", cfg, "--out", out_b.to_str().unwrap()]);
    let mut a = read_json(&out_a.join("solve.json"));
    let mut b = read_json(&out_b.join("solve.json"));
    // Runtime is the one permitted difference between identical runs.
    a["artifact"]["runtime_ms"] = 0.into();
    b["artifact"]["runtime_ms"] = 0.into();
    assert_eq!(a, b);
    assert_eq!(a["env"], "wall-strip");
    assert_eq!(a["abstraction"], "info-state");
    assert_eq!(a["artifact"]["value"], 2.0);
}

#[test]
fn pinned_initial_observation_conditions_the_value() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{
  "env": {"kind": "wall-strip",
          "grid": {"horizon": 2, "initial_agent": [0, 2], "initial_observation": [0, -2]}}
}"#;
    let config = dir.path().join("config.json");
    fs::write(&config, json).unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let artifact = read_json(&out.join("solve.json"));
    // An attacker seen far out on the flank cannot land a hit in two steps.
    assert_eq!(artifact["artifact"]["value"], 0.0);
}

#[test]
fn compare_is_deterministic_and_quantized_side_is_smaller() {
    let dir = tempfile::tempdir().unwrap();
    let config = strip_config(dir.path(), "");
    let cfg = config.to_str().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(&["compare", "--config", cfg, "--out", out_a.to_str().unwrap()]);
    run_ok(&["compare", "--config", cfg, "--out", out_b.to_str().unwrap()]);

    let strip_runtimes = |path: &Path| -> Vec<Vec<String>> {
        let mut reader = csv::Reader::from_path(path).unwrap();
        let header: Vec<String> = reader
            .headers()
            .unwrap()
            .iter()
            .map(str::to_string)
            .collect();
        assert_eq!(
            header,
            [
                "init",
                "value_a",
                "value_b",
                "worst_a",
                "worst_b",
                "count_a",
                "count_b",
                "runtime_a_ms",
                "runtime_b_ms",
                "alpha0",
                "gap",
                "within_2alpha0"
            ]
        );
        reader
            .records()
            .map(|record| {
                let mut fields: Vec<String> =
                    record.unwrap().iter().map(str::to_string).collect();
                fields[7].clear();
                fields[8].clear();
                fields
            })
            .collect()
    };
    let rows_a = strip_runtimes(&out_a.join("compare.csv"));
    let rows_b = strip_runtimes(&out_b.join("compare.csv"));
    assert_eq!(rows_a, rows_b);
    assert_eq!(rows_a.len(), 6, "one row per feasible attacker cell");
    for row in &rows_a {
        let count_a: usize = row[5].parse().unwrap();
        let count_b: usize = row[6].parse().unwrap();
        assert!(
            count_b < count_a,
            "quantized abstraction should be smaller: {row:?}"
        );
        assert_eq!(row[11], "true", "gap should stay within 2*alpha0: {row:?}");
    }
}

#[test]
fn compare_accepts_explicit_initial_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let config = strip_config(dir.path(), r#", "initial_conditions": [[0, -1], [1, -2]]"#);
    let out = dir.path().join("out");
    run_ok(&[
        "compare",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let output = read_json(&out.join("compare.json"));
    let rows = output["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["init"], "(0,-1)");
    assert_eq!(rows[1]["init"], "(1,-2)");
    // Identical columns come from the same solver path, so the values in
    // the JSON and CSV artifacts agree.
    let csv_text = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(csv_text.lines().count(), 3);
}

#[test]
fn simulate_stays_within_the_guarantee() {
    let dir = tempfile::tempdir().unwrap();
    let config = strip_config(dir.path(), "");
    let out = dir.path().join("out");
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "123",
    ]);
    let summary = read_json(&out.join("simulate.json"));
    assert_eq!(summary["seed"], 123);
    assert_eq!(summary["replicates"], 8);
    assert_eq!(summary["within_guarantee"], true);
    let worst = summary["worst_realized"].as_f64().unwrap();
    let value = summary["guaranteed_value"].as_f64().unwrap();
    assert!(worst <= value + 1e-9);
    let trace = fs::read_to_string(out.join("rollouts.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replicate,t,agent,opponent,observation,action,stage_cost"
    );
    assert!(lines.count() >= 8, "at least one step per replicate");
}

#[test]
fn learned_ranges_reload_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let config = strip_config(
        dir.path(),
        r#", "data": {"source": "sampled", "trajectories": 40}"#,
    );
    let out = dir.path().join("out");
    run_ok(&[
        "learn-ranges",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    // `from_json` re-validates the shape, so a clean reload is the check.
    let model =
        EmpiricalRangeModel::from_json(&fs::read_to_string(out.join("ranges.json")).unwrap())
            .unwrap();
    assert_eq!(model.horizon, 2);
    let summary = read_json(&out.join("learn.json"));
    assert_eq!(summary["trajectories"], 40);
    assert_eq!(summary["policy"], "uniform-random");
    let ndjson = fs::read_to_string(out.join("dataset.ndjson")).unwrap();
    assert_eq!(ndjson.lines().count(), 40 * 3, "one record per step");
}

#[test]
fn report_summarizes_existing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = strip_config(dir.path(), "");
    let cfg = config.to_str().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    run_ok(&["solve", "--config", cfg, "--out", out_s]);
    run_ok(&["verify-bounds", "--config", cfg, "--out", out_s]);
    run_ok(&["report", "--out", out_s]);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("artifact,metric,value\n"));
    assert!(report.contains("solve.json,value,2"));
    assert!(report.contains("bounds.json,violations,0"));
    assert!(!report.contains("compare.json"), "no compare artifact yet");
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    // 2: malformed configuration.
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"env": {"kind": "wall-strip", "grid": {"horizon": 2}}}"#).unwrap();
    let output = run(&["solve", "--config", bad.to_str().unwrap(), "--out", out_s]);
    assert_eq!(output.status.code(), Some(2));

    // 2: missing --config.
    let output = run(&["solve", "--out", out_s]);
    assert_eq!(output.status.code(), Some(2));

    // 2: unknown flag (usage error reported by the argument parser).
    let output = run(&["solve", "--no-such-flag"]);
    assert_eq!(output.status.code(), Some(2));

    // 3: enumeration budget exhausted.
    let config = strip_config(dir.path(), "");
    let output = run(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_s,
        "--budget",
        "10",
    ]);
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("budget"));

    // 2: report over a directory with no artifacts.
    let output = run(&["report", "--out", dir.path().join("empty").to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn bound_violations_exit_with_code_four_but_still_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = strip_config(dir.path(), r#", "override_measured_eps": [99.0, 99.0, 99.0]"#);
    let out = dir.path().join("out");
    let output = run(&[
        "verify-bounds",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&output.stderr).contains("bound violation"));
    let report = read_json(&out.join("bounds.json"));
    assert_eq!(report["eps_measured"], serde_json::json!([99.0, 99.0, 99.0]));
    assert!(out.join("bounds.csv").exists());

    // The honest run passes and overwrites the artifacts in place.
    let clean = strip_config(dir.path(), "");
    let output = run(&[
        "verify-bounds",
        "--config",
        clean.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    let report = read_json(&out.join("bounds.json"));
    assert!(report["violations"].is_null(), "violations is a method, not a field");
    let eps: Vec<f64> = serde_json::from_value(report["eps_measured"].clone()).unwrap();
    assert!(eps.iter().all(|&e| e < 99.0));
}

#[test]
fn conflicting_pins_are_rejected_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{
  "env": {"kind": "wall-strip",
          "grid": {"horizon": 2, "initial_agent": [0, 2],
                   "initial_observation": [0, -2], "initial_true": [0, -2]}}
}"#;
    let config = dir.path().join("config.json");
    fs::write(&config, json).unwrap();
    let output = run(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));

    // simulate and compare refuse a pinned initial observation outright.
    let pinned = r#"{
  "env": {"kind": "wall-strip",
          "grid": {"horizon": 2, "initial_agent": [0, 2], "initial_observation": [0, -2]}},
  "baseline": {"kind": "quantized"}
}"#;
    fs::write(&config, pinned).unwrap();
    for command in ["simulate", "compare", "learn-ranges"] {
        let output = run(&[
            command,
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]);
        assert_eq!(output.status.code(), Some(2), "{command} should reject the pin");
    }
}
