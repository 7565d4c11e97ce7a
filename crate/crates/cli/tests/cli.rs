use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn keydyn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keydyn")).current_dir(dir).args(args).output().expect("spawn keydyn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = keydyn(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_cohort(dir: &Path) {
    ok(dir, &["synth", "--users", "3", "--windows", "10", "--seed", "5", "--out", "cohort.jsonl"]);
}

#[test]
fn extract_writes_features_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    small_cohort(dir.path());
    let stdout = ok(dir.path(), &["extract", "--dataset", "cohort.jsonl", "--out", "out"]);
    assert!(stdout.contains("desktop: 3 users, 30 windows"));

    let csv = fs::read_to_string(dir.path().join("out/features_desktop.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 69 + 3);
    assert_eq!(&header[69..], ["user", "device", "window"]);
    assert_eq!(csv.lines().count(), 31);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/ingest_summary_desktop.json")).unwrap()).unwrap();
    assert_eq!(summary["dropped_downs"], 0);
    assert_eq!(summary["digraphs"], 30 * 99);
    assert_eq!(summary["filtered_digraphs"], 0);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest_extract.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["window_len"], 100);
    assert_eq!(manifest["config"]["max_flight_ms"], 5000);
}

#[test]
fn select_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    small_cohort(dir.path());
    ok(dir.path(), &["extract", "--dataset", "cohort.jsonl", "--out", "out"]);
    let stdout = ok(dir.path(), &["select", "--out", "out", "--policy", "top-k:5", "--rf-trees", "20"]);
    assert!(stdout.contains("5 features selected"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/importance_desktop.json")).unwrap()).unwrap();
    let keys: Vec<&String> = report["family_counts"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["CKP", "DEFT", "NC", "TEMP"]);
    assert_eq!(report["seed"], 42, "default seed is recorded");

    ok(dir.path(), &["evaluate", "--out", "out", "--folds", "3", "--gbm-trees", "10"]);
    let summary = fs::read_to_string(dir.path().join("out/summary_desktop_selected.csv")).unwrap();
    assert!(summary.starts_with("Device,Model,Accuracy,Accuracy_std,EER,EER_std,F1,F1_std,AUC-ROC,AUC-ROC_std\n"));
    let roc = fs::read_to_string(dir.path().join("out/roc_desktop_selected.csv")).unwrap();
    assert_eq!(roc.lines().count(), 102);
}

#[test]
fn evaluate_family_subset() {
    let dir = tempfile::tempdir().unwrap();
    small_cohort(dir.path());
    ok(dir.path(), &["extract", "--dataset", "cohort.jsonl", "--out", "out"]);
    ok(dir.path(), &["evaluate", "--out", "out", "--families", "NC,TEMP", "--folds", "3", "--gbm-trees", "5"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report_desktop_TEMP-NC.json")).unwrap()).unwrap();
    assert_eq!(report["features"].as_array().unwrap().len(), 13);
    assert_eq!(report["model"], "TEMP+NC");
}

#[test]
fn missing_selection_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    small_cohort(dir.path());
    ok(dir.path(), &["extract", "--dataset", "cohort.jsonl", "--out", "out"]);
    let out = keydyn(dir.path(), &["evaluate", "--out", "out"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--all-features"));
}

#[test]
fn empty_dataset_is_no_data() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let out = keydyn(dir.path(), &["extract", "--dataset", "empty", "--format", "jsonl", "--out", "out"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no data"));
}

#[test]
fn parse_errors_name_the_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("7_desktop.txt"), "A KeyDown 100\nA KeyUp 180\nB sideways 200\n").unwrap();
    let out = keydyn(dir.path(), &["extract", "--dataset", "7_desktop.txt", "--out", "out"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("7_desktop.txt"), "{err}");
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.json"),
        r#"{"users": 2, "windows": 10, "signal": "null", "seed": 3, "out": "a.jsonl"}"#,
    )
    .unwrap();
    ok(dir.path(), &["synth", "--config", "run.json", "--out", "b.jsonl"]);
    assert!(dir.path().join("b.jsonl").exists());
    assert!(!dir.path().join("a.jsonl").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["signal"], "null");
    assert_eq!(manifest["config"]["seed"], 3);

    fs::write(dir.path().join("bad.json"), r#"{"user": 2}"#).unwrap();
    assert_eq!(keydyn(dir.path(), &["synth", "--config", "bad.json"]).status.code(), Some(2));
}

#[test]
fn device_filter_on_mixed_input() {
    let dir = tempfile::tempdir().unwrap();
    small_cohort(dir.path());
    let text = fs::read_to_string(dir.path().join("cohort.jsonl")).unwrap();
    let mobile: String = text.lines().take(2000).map(|l| l.replace("\"desktop\"", "\"mobile\"") + "\n").collect();
    fs::write(dir.path().join("mixed.jsonl"), text + &mobile).unwrap();
    let stdout = ok(dir.path(), &["extract", "--dataset", "mixed.jsonl", "--out", "both"]);
    assert!(stdout.contains("desktop:") && stdout.contains("mobile:"));
    assert!(dir.path().join("both/features_mobile.csv").exists());
    ok(dir.path(), &["extract", "--dataset", "mixed.jsonl", "--device", "mobile", "--out", "one"]);
    assert!(!dir.path().join("one/features_desktop.csv").exists());
}
