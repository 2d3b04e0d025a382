use std::path::Path;
use std::process::Command;

fn biaspipe(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_biaspipe"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap()
}

#[test]
fn fixtures_ingest_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = biaspipe(&["fixtures", "--out", "data", "--documents", "120", "--per-group", "20"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("data/interviews.jsonl").exists());

    let out = biaspipe(
        &["ingest", "--corpus", "data/interviews.jsonl", "--min-df", "2", "--out", "ingest"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = biaspipe(
        &["lca", "--survey", "data/survey.csv", "--schema", "data/survey_schema.json", "--k-max", "2", "--restarts", "2", "--out", "lca"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let measurement = std::fs::read_to_string(dir.path().join("lca/measurement_model.csv")).unwrap();
    assert!(measurement.starts_with("variable,0"));
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.jsonl"), "{not json\n").unwrap();
    let out = biaspipe(&["ingest", "--corpus", "broken.jsonl", "--out", "x"], dir.path());
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}
