use biaspipe::distribution::GroupDistribution;
use biaspipe::fixtures;
use biaspipe::pipeline::{
    compare_topic_models, emit_bias_report, open_bundle, run, total_variation, triangulate, verify, BiasLedgerEntry,
    PipelineConfig, PipelineError, RunOptions, StageStatus, TopicModelResult, Topology,
};
use std::path::Path;

fn model(name: &str, topics: &[&[&str]]) -> TopicModelResult {
    TopicModelResult {
        name: name.into(),
        vocabulary_fingerprint: "v".into(),
        topics: topics.iter().map(|t| t.iter().map(|w| w.to_string()).collect()).collect(),
        coherence: None,
    }
}

#[test]
fn hand_enumerated_topic_match() {
    let a = model("A", &[&["a", "b", "c"], &["x", "y", "z"]]);
    let b = model("B", &[&["a", "b", "d"], &["x", "q", "r"]]);
    let report = compare_topic_models(&[a, b], 3).unwrap();
    let pair = &report.pairs[0];
    let jaccards: Vec<(usize, usize, f64)> = pair.matches.iter().map(|m| (m.topic_a, m.topic_b, m.jaccard)).collect();
    assert_eq!(jaccards, vec![(0, 0, 2.0 / 4.0), (1, 1, 1.0 / 5.0)]);
    assert!((pair.mean_jaccard - 0.35).abs() < 1e-15);
    assert!(pair.unmatched_a.is_empty() && pair.unmatched_b.is_empty());
}

#[test]
fn comparison_needs_two_models() {
    let a = model("A", &[&["a"]]);
    assert!(matches!(compare_topic_models(&[a], 1), Err(PipelineError::Comparison(_))));
}

fn dist(rows: &[(&str, &[f64])]) -> GroupDistribution {
    GroupDistribution::from_weights(rows.iter().map(|(g, w)| (*g, *w)), rows[0].1.len())
}

#[test]
fn triangulation_examples() {
    let main = dist(&[("A", &[0.6, 0.4]), ("B", &[0.1, 0.9])]);
    assert!((total_variation(&[0.6, 0.4], &[0.1, 0.9]) - 0.5).abs() < 1e-12);
    let same = dist(&[("A", &[0.5, 0.5]), ("B", &[0.5, 0.5])]);
    let report = triangulate(("main", &same), &[("alt", &same)], 0.2).unwrap();
    assert!(report.datasets.iter().all(|d| d.h == 0.0));
    assert!(!report.agreement);

    let disjoint = dist(&[("A", &[1.0, 0.0, 0.0]), ("B", &[0.0, 0.0, 1.0])]);
    let report = triangulate(("main", &main), &[("alt", &disjoint)], 0.2).unwrap();
    assert!((report.datasets[0].h - 0.5).abs() < 1e-12);
    assert_eq!(report.datasets[1].h, 1.0);
    assert!(report.agreement);

    let other_groups = dist(&[("A", &[0.5, 0.5]), ("C", &[0.5, 0.5])]);
    assert!(matches!(
        triangulate(("main", &main), &[("alt", &other_groups)], 0.2),
        Err(PipelineError::GroupLabelMismatch { .. })
    ));
}

const BASE: &str = r#"
name = "t"
topology = "linear"
seed = 3

[datasets.docs]
kind = "corpus"
path = "docs.jsonl"

[[stages]]
id = "collect"
op = "human.interview"

[[stages]]
id = "ingest"
op = "corpus.ingest"
inputs = ["collect"]
dataset = "docs"

[[stages]]
id = "btm"
op = "topics.btm"
inputs = ["ingest"]
params = { topics = 3, iterations = 30 }

[[stages]]
id = "coherence"
op = "eval.coherence"
inputs = ["btm"]
"#;

fn invalid(text: &str) -> String {
    match PipelineConfig::from_toml(text).and_then(|c| c.validate().map(|_| c)) {
        Err(PipelineError::ConfigValidation(msg)) => msg,
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn base_config_validates() {
    let config = PipelineConfig::from_toml(BASE).unwrap();
    config.validate().unwrap();
    assert_eq!(config.shape(), Topology::Linear);
    let levels = config.levels().unwrap();
    assert_eq!(levels.len(), 4);
}

#[test]
fn validation_errors() {
    assert!(invalid(&BASE.replace("op = \"eval.coherence\"", "op = \"eval.magic\"")).contains("magic"));
    assert!(invalid(&BASE.replace("inputs = [\"btm\"]", "inputs = [\"nope\"]")).contains("nope"));
    assert!(invalid(&BASE.replace("id = \"coherence\"", "id = \"btm\"")).contains("btm"));
    // coherence fed from a corpus instead of a topic model
    invalid(&BASE.replace("inputs = [\"btm\"]", "inputs = [\"ingest\"]"));
    invalid(&BASE.replace("topology = \"linear\"", "topology = \"parallel\""));
    invalid(&BASE.replace("dataset = \"docs\"", "dataset = \"missing\""));
}

#[test]
fn cycles_are_rejected() {
    let cyclic = BASE.replace("inputs = [\"collect\"]", "inputs = [\"collect\", \"coherence\"]");
    assert!(invalid(&cyclic).to_lowercase().contains("cycle"));
}

#[test]
fn unknown_fields_are_rejected() {
    assert!(PipelineConfig::from_toml(&BASE.replace("seed = 3", "seed = 3\nsed = 4")).is_err());
}

#[test]
fn topology_is_derived_from_the_graph() {
    let parallel = BASE.replace("topology = \"linear\"", "topology = \"parallel\"").replace(
        "[[stages]]\nid = \"coherence\"\nop = \"eval.coherence\"\ninputs = [\"btm\"]",
        "[[stages]]\nid = \"corex\"\nop = \"topics.corex\"\ninputs = [\"ingest\"]\n\n[[stages]]\nid = \"cmp\"\nop = \"compare.topics\"\ninputs = [\"btm\", \"corex\"]",
    );
    let config = PipelineConfig::from_toml(&parallel).unwrap();
    config.validate().unwrap();
    assert_eq!(config.shape(), Topology::Parallel);

    let hybrid = parallel
        .replace("topology = \"parallel\"", "topology = \"hybrid\"")
        .replace(
            "[[stages]]\nid = \"btm\"\nop = \"topics.btm\"\ninputs = [\"ingest\"]",
            "[[stages]]\nid = \"tune\"\nop = \"tune.btm\"\ninputs = [\"ingest\"]\n\n[[stages]]\nid = \"btm\"\nop = \"topics.btm\"\ninputs = [\"ingest\", \"tune\"]",
        );
    let config = PipelineConfig::from_toml(&hybrid).unwrap();
    config.validate().unwrap();
    assert_eq!(config.shape(), Topology::Hybrid);
}

fn entry(stage: &str, source: &str, mitigation: &str) -> BiasLedgerEntry {
    let text = format!("stage = \"{stage}\"\nsource = \"{source}\"\nmitigation = \"{mitigation}\"\n");
    toml::from_str(&text).unwrap()
}

#[test]
fn bias_report_sections_and_flags() {
    let config = PipelineConfig::from_toml(BASE).unwrap();
    let ledger = vec![entry("collect", "selection", "reflexivity"), entry("btm", "algorithmic", "none")];
    let report = emit_bias_report(&config, &ledger).unwrap();
    let sections: Vec<&str> = report.sections.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(sections, vec!["collect", "btm"]);
    assert_eq!(report.undeclared, vec!["ingest".to_string(), "coherence".to_string()]);
    assert_eq!(report.unmitigated.len(), 1);
    assert_eq!(report.unmitigated[0].stage, "btm");
    assert!(!report.sections[0].executed);
    assert!(report.render().contains("UNMITIGATED"));

    let bad = vec![entry("ghost", "data", "none")];
    assert_eq!(
        emit_bias_report(&config, &bad).unwrap_err(),
        PipelineError::UnknownStage("ghost".into())
    );
}

#[test]
fn ledger_aliases_parse() {
    for (alias, canonical) in [("personal", "researcher"), ("translation", "transcription"), ("coding", "labelling")] {
        let a = entry("collect", alias, "none");
        let b = entry("collect", canonical, "none");
        assert_eq!(a.source, b.source);
    }
}

fn write_demo(dir: &Path, config: &str) -> PipelineConfig {
    std::fs::write(dir.join("docs.jsonl"), fixtures::demo_corpus(80, 2).to_jsonl()).unwrap();
    let path = dir.join("p.toml");
    std::fs::write(&path, config).unwrap();
    PipelineConfig::load(&path).unwrap()
}

#[test]
fn bundle_round_trip_and_tamper_detection() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo(dir.path(), BASE);
    let options = RunOptions {
        output_dir: Some(dir.path().join("runs")),
    };
    let bundle = run(&config, &options).unwrap();
    assert_eq!(bundle.status("collect"), Some(&StageStatus::Declared));
    assert_eq!(bundle.status("coherence"), Some(&StageStatus::Completed));
    let reopened = open_bundle(&bundle.dir).unwrap();
    assert_eq!(reopened.run_id(), bundle.run_id());

    // changing output_dir does not change identity
    let elsewhere = run(
        &config,
        &RunOptions {
            output_dir: Some(dir.path().join("elsewhere")),
        },
    )
    .unwrap();
    assert_eq!(elsewhere.run_id(), bundle.run_id());

    std::fs::write(bundle.dir.join("stages/btm/topic_words.csv"), "tampered\n").unwrap();
    assert!(matches!(open_bundle(&bundle.dir), Err(PipelineError::ManifestMismatch(_))));
}

#[test]
fn seed_changes_run_identity() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_demo(dir.path(), BASE);
    let b = write_demo(dir.path(), &BASE.replace("seed = 3", "seed = 4"));
    let options = RunOptions {
        output_dir: Some(dir.path().join("runs")),
    };
    assert_ne!(run(&a, &options).unwrap().run_id(), run(&b, &options).unwrap().run_id());
}

#[test]
fn failures_block_dependents() {
    let dir = tempfile::tempdir().unwrap();
    // a topic count larger than anything sensible still fits; an invalid beta fails
    let config = write_demo(dir.path(), &BASE.replace("topics = 3, iterations = 30", "topics = 3, beta = -1.0"));
    let bundle = run(
        &config,
        &RunOptions {
            output_dir: Some(dir.path().join("runs")),
        },
    )
    .unwrap();
    assert!(matches!(bundle.status("btm"), Some(StageStatus::Failed { .. })));
    assert_eq!(
        bundle.status("coherence"),
        Some(&StageStatus::Skipped {
            blocked_by: "btm".into()
        })
    );
    assert_eq!(bundle.failures().len(), 1);
}

#[test]
fn unknown_params_fail_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo(dir.path(), &BASE.replace("topics = 3, iterations = 30", "topicz = 3"));
    let bundle = run(
        &config,
        &RunOptions {
            output_dir: Some(dir.path().join("runs")),
        },
    )
    .unwrap();
    match bundle.status("btm") {
        Some(StageStatus::Failed { cause }) => assert!(cause.contains("topicz")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn verify_against_alternate_survey() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("survey.csv"), fixtures::demo_survey(30, 1).to_csv()).unwrap();
    std::fs::write(dir.path().join("alt.csv"), fixtures::demo_survey(30, 2).to_csv()).unwrap();
    std::fs::write(dir.path().join("schema.json"), fixtures::demo_survey_schema().to_json()).unwrap();
    let text = r#"
name = "v"
topology = "linear"
seed = 1

[datasets.survey]
kind = "survey"
path = "survey.csv"
schema = "schema.json"

[[stages]]
id = "survey"
op = "survey.ingest"
dataset = "survey"

[[stages]]
id = "lca"
op = "lca.fit"
inputs = ["survey"]
params = { k_min = 2, k_max = 3, restarts = 2 }
"#;
    let path = dir.path().join("v.toml");
    std::fs::write(&path, text).unwrap();
    let config = PipelineConfig::load(&path).unwrap();
    let options = RunOptions {
        output_dir: Some(dir.path().join("runs")),
    };
    let (out, report) = verify(&config, &dir.path().join("alt.csv"), None, &options).unwrap();
    assert_eq!(report.datasets.len(), 2);
    assert!(out.join("triangulation.json").exists());
    let (again, _) = verify(&config, &dir.path().join("alt.csv"), None, &options).unwrap();
    assert_eq!(out, again);
}

#[test]
fn parent_run_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo(dir.path(), &BASE.replace("seed = 3", "seed = 3\nparent_run = \"abc123\""));
    let bundle = run(
        &config,
        &RunOptions {
            output_dir: Some(dir.path().join("runs")),
        },
    )
    .unwrap();
    assert_eq!(bundle.metadata.parent_run.as_deref(), Some("abc123"));
}
