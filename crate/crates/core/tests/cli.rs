use std::path::Path;
use std::process::{Command, Output};

fn demandscope(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demandscope"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_json(output: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not json: {line}: {e}"))
}

#[test]
fn synth_writes_survey_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let output = demandscope(dir.path(), &["--set", "synth.n_rows=120", "synth"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for name in ["survey.csv", "schema.json", "ground_truth.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let survey = std::fs::read_to_string(dir.path().join("survey.csv")).unwrap();
    assert_eq!(survey.lines().count(), 121);
}

#[test]
fn missing_artifact_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let output = demandscope(dir.path(), &["explain"]);
    assert_eq!(output.status.code(), Some(1));
    let err = error_json(&output);
    assert_eq!(err["error"], "MissingArtifact");
    assert_eq!(err["exit_code"], 1);
}

#[test]
fn unknown_outlier_column_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert!(demandscope(dir.path(), &["--set", "synth.n_rows=120", "synth"])
        .status
        .success());
    let output = demandscope(
        dir.path(),
        &["--set", "preprocess.outlier_columns=[\"wingspan\"]", "clean"],
    );
    assert_eq!(output.status.code(), Some(1));
    assert_eq!(error_json(&output)["error"], "UnknownColumn");
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let output = demandscope(dir.path(), &["--set", "cv.k=1", "synth"]);
    assert_eq!(output.status.code(), Some(1));
    assert_eq!(error_json(&output)["error"], "InvalidConfig");

    let output = demandscope(dir.path(), &["--set", "train.epochz=3", "synth"]);
    assert_eq!(output.status.code(), Some(1));
    assert_eq!(error_json(&output)["error"], "ConfigParse");
}

#[test]
fn usage_error_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let output = demandscope(dir.path(), &["fly-to-mars"]);
    assert_eq!(output.status.code(), Some(1));
    assert_eq!(error_json(&output)["error"], "Usage");
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let output = demandscope(dir.path(), &["--help"]);
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    for sub in ["synth", "clean", "train", "eval", "explain", "report"] {
        assert!(text.contains(sub), "{sub}");
    }
}

#[test]
fn same_seed_same_survey() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert!(
            demandscope(dir.path(), &["--seed", "17", "--set", "synth.n_rows=150", "synth"])
                .status
                .success()
        );
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("survey.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}
