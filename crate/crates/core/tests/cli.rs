use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sflab::cli::{run, ExperimentConfig, SUMMARY_COLUMNS};

fn sflab(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sflab"))
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap()
}

fn records(out: &[u8]) -> Vec<Value> {
    String::from_utf8_lossy(out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn sf_record_for_scaled_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = sflab(
        dir.path(),
        r#"{"command": "sf", "family": {"kind": "scaled_identity", "n": 1}, "R": 8, "N": 2000}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&out.stdout);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["result"]["sf"], 1);
    assert_eq!(recs[0]["config"]["lambda"], 4.0);
    assert_eq!(recs[0]["config"]["guard"], 1e-8);
}

#[test]
fn index_record_for_diag_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = sflab(
        dir.path(),
        r#"{"command": "index", "family": "diag-pair", "N": 800}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &records(&out.stdout)[0]["result"];
    assert_eq!(
        (r["sf"].as_i64(), r["index"].as_i64(), r["equal"].as_bool()),
        (Some(0), Some(0), Some(true))
    );
    assert_eq!(r["dim_ker"], r["dim_coker"]);
}

#[test]
fn verify_passes_every_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = sflab(dir.path(), r#"{"command": "verify"}"#, &["--jobs", "2"]);
    let summary = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(0), "{summary}");
    let recs = records(&out.stdout);
    assert_eq!(recs.len(), 7);
    assert!(recs.iter().all(|r| r["pass"] == true));
    assert!(summary.contains("0 failed"));
}

#[test]
fn out_file_gets_records_and_eigenflow() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("run.jsonl");
    let out = sflab(
        dir.path(),
        r#"{"command": "sf", "family": "pauli-well", "N": 300}"#,
        &["--out", target.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS] cell 0"));
    assert_eq!(records(&std::fs::read(&target).unwrap()).len(), 1);
    let table = std::fs::read_to_string(dir.path().join("run.eigenflow.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "x,lambda_1,lambda_2,branch_1,branch_2");
    assert_eq!(lines.count(), 301);
}

#[test]
fn csv_format_writes_summary_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = sflab(
        dir.path(),
        r#"{"command": "sweep", "family": {"kind": "scaled_identity", "n": 2}, "lambdas": [2, 4], "R": 6, "N": 300}"#,
        &["--format", "csv", "--jobs", "2"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        SUMMARY_COLUMNS.to_vec()
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| &r[7] == "2" && &r[13] == "true"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = sflab(
        dir.path(),
        r#"{"command": "sweep", "family": "diag-pair", "N_list": []}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = sflab(
        dir.path(),
        r#"{"command": "sf", "family": {"kind": "tanh_well", "s": [[1]]}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("family"));
    let out = sflab(
        dir.path(),
        r#"{"command": "index", "family": "diag-pair"}"#,
        &["--tol", "2"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = sflab(
        dir.path(),
        r#"{"command": "index", "family": "diag-pair"}"#,
        &["--bogus"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn computation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // not invertible at the ends
    let out = sflab(
        dir.path(),
        r#"{"command": "index", "family": {"kind": "constant", "a": [[0]]}, "N": 100}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let recs = records(&out.stdout);
    assert_eq!(recs[0]["pass"], false);
    assert!(recs[0]["error"].as_str().unwrap().contains("N=100"));
}

#[test]
fn reruns_are_identical() {
    let cfg = ExperimentConfig::from_json(
        r#"{"command": "sweep", "family": {"kind": "random_smooth", "n": 3, "seed": 11},
            "lambdas": [2, 4], "R_list": [6, 8], "N": 300}"#,
    )
    .unwrap();
    let strip = |recs: Vec<sflab::cli::RunRecord>| -> Vec<Value> {
        recs.into_iter()
            .map(|r| {
                let mut v = serde_json::to_value(r).unwrap();
                v.as_object_mut().unwrap().remove("runtime_ms");
                v["result"].as_object_mut().unwrap().remove("runtime_ms");
                v
            })
            .collect()
    };
    let a = strip(run(&cfg));
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = strip(serial.install(|| run(&cfg)));
    assert_eq!(a, b);
}

#[test]
fn schema_lists_every_config_key() {
    let schema: Value = serde_json::from_str(include_str!("../schema/experiment.schema.json")).unwrap();
    let documented: BTreeSet<String> = schema["properties"].as_object().unwrap().keys().cloned().collect();
    let cfg = ExperimentConfig::from_json(r#"{"command": "verify"}"#).unwrap();
    let emitted: BTreeSet<String> = serde_json::to_value(cfg)
        .unwrap()
        .as_object()
        .unwrap()
        .keys()
        .cloned()
        .collect();
    assert_eq!(documented, emitted);
}
