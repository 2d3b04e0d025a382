use super::config::{PipelineConfig, StageSpec};
use super::ledger::emit_bias_report;
use super::stages::{execute, Artifact, StageOutput};
use super::triangulate::{triangulate, TriangulationReport, DEFAULT_THRESHOLD};
use super::PipelineError;
use crate::distribution::AssignmentMode;
use crate::hashing::{derive_seed, sha256_hex};
use crate::lca::{self, RawSurvey};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const MANIFEST: &str = "manifest.json";
/// Wall-clock data; kept out of the manifest so bundles stay comparable.
pub const TIMING: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    /// Human stage recorded for the ledger only.
    Declared,
    Failed { cause: String },
    Skipped { blocked_by: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub id: String,
    pub op: String,
    #[serde(flatten)]
    pub status: StageStatus,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub pipeline: String,
    pub topology: String,
    pub seed: u64,
    pub config_hash: String,
    pub parent_run: Option<String>,
    /// Dataset file name to content hash.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub metadata: RunMetadata,
    /// Relative path to sha256 of every emitted file except the manifest
    /// itself and the timing file.
    pub manifest: BTreeMap<String, String>,
}

impl ReportBundle {
    pub fn run_id(&self) -> &str {
        &self.metadata.run_id
    }

    pub fn failures(&self) -> Vec<&StageRecord> {
        self.metadata
            .stages
            .iter()
            .filter(|s| matches!(s.status, StageStatus::Failed { .. }))
            .collect()
    }

    pub fn status(&self, stage: &str) -> Option<&StageStatus> {
        self.metadata.stages.iter().find(|s| s.id == stage).map(|s| &s.status)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the config's output directory.
    pub output_dir: Option<PathBuf>,
}

fn io(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

fn input_hashes(config: &PipelineConfig) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    for (name, spec) in &config.datasets {
        for (label, path) in std::iter::once(("data", &spec.path)).chain(spec.schema.iter().map(|s| ("schema", s))) {
            let full = config.resolve(path);
            let bytes = std::fs::read(&full).map_err(|e| PipelineError::Dataset {
                dataset: name.clone(),
                detail: format!("{}: {e}", full.display()),
            })?;
            out.insert(format!("{name}.{label}"), sha256_hex(&bytes));
        }
    }
    Ok(out)
}

/// Hash of everything that determines a run's outputs: the config (minus
/// where it is written) and the input bytes.
fn identity(config: &PipelineConfig, inputs: &BTreeMap<String, String>) -> (String, String) {
    let mut canonical = config.clone();
    canonical.output_dir = PathBuf::new();
    let config_hash = sha256_hex(canonical.canonical_json().as_bytes());
    let mut material = config_hash.clone();
    for (k, v) in inputs {
        material.push_str(&format!("\n{k}={v}"));
    }
    let run_id = sha256_hex(material.as_bytes())[..16].to_string();
    (config_hash, run_id)
}

pub(crate) struct Execution {
    pub artifacts: BTreeMap<String, Artifact>,
    pub records: Vec<StageRecord>,
    pub outputs: Vec<(String, Vec<(String, Vec<u8>)>)>,
    pub durations_ms: BTreeMap<String, u128>,
}

fn blocked_by(stage: &StageSpec, records: &BTreeMap<String, StageStatus>) -> Option<String> {
    stage.inputs.iter().find_map(|i| match records.get(i) {
        Some(StageStatus::Failed { .. }) => Some(i.clone()),
        Some(StageStatus::Skipped { blocked_by }) => Some(blocked_by.clone()),
        _ => None,
    })
}

/// Executes the stage graph level by level; stages within a level run
/// concurrently. A failure skips its dependents only.
pub(crate) fn execute_graph(config: &PipelineConfig) -> Result<Execution, PipelineError> {
    let levels = config.levels()?;
    let mut artifacts: BTreeMap<String, Artifact> = BTreeMap::new();
    let mut status: BTreeMap<String, StageStatus> = BTreeMap::new();
    let mut outputs: BTreeMap<String, Vec<(String, Vec<u8>)>> = BTreeMap::new();
    let mut durations_ms = BTreeMap::new();
    for level in levels {
        let mut runnable = Vec::new();
        for &i in &level {
            let stage = &config.stages[i];
            if let Some(blocker) = blocked_by(stage, &status) {
                status.insert(stage.id.clone(), StageStatus::Skipped { blocked_by: blocker });
            } else {
                runnable.push(stage);
            }
        }
        let results: Vec<(Result<StageOutput, String>, u128)> = runnable
            .par_iter()
            .map(|stage| {
                let inputs: Vec<Artifact> = stage
                    .inputs
                    .iter()
                    .map(|i| artifacts[i].clone())
                    .filter(|a| stage.is_human() || !matches!(a, Artifact::Human))
                    .collect();
                let started = Instant::now();
                let result = execute(config, stage, &inputs, derive_seed(config.seed, &stage.id));
                (result, started.elapsed().as_millis())
            })
            .collect();
        for (stage, (result, ms)) in runnable.into_iter().zip(results) {
            durations_ms.insert(stage.id.clone(), ms);
            match result {
                Ok(out) => {
                    let s = if stage.is_human() {
                        StageStatus::Declared
                    } else {
                        StageStatus::Completed
                    };
                    status.insert(stage.id.clone(), s);
                    artifacts.insert(stage.id.clone(), out.artifact);
                    outputs.insert(stage.id.clone(), out.files);
                }
                Err(cause) => {
                    status.insert(stage.id.clone(), StageStatus::Failed { cause });
                }
            }
        }
    }
    let records = config
        .stages
        .iter()
        .map(|s| StageRecord {
            id: s.id.clone(),
            op: s.op.clone(),
            status: status[&s.id].clone(),
            files: outputs
                .get(&s.id)
                .map(|f| f.iter().map(|(n, _)| format!("stages/{}/{n}", s.id)).collect())
                .unwrap_or_default(),
        })
        .collect();
    let outputs = config
        .stages
        .iter()
        .filter_map(|s| outputs.remove(&s.id).map(|f| (s.id.clone(), f)))
        .collect();
    Ok(Execution {
        artifacts,
        records,
        outputs,
        durations_ms,
    })
}

fn write(dir: &Path, rel: &str, bytes: &[u8], manifest: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
    manifest.insert(rel.to_string(), sha256_hex(bytes));
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs a validated config and writes its bundle to
/// `<output_dir>/<run_id>/`, replacing any earlier bundle of the same run.
pub fn run(config: &PipelineConfig, options: &RunOptions) -> Result<ReportBundle, PipelineError> {
    config.validate()?;
    let started = unix_now();
    let inputs = input_hashes(config)?;
    let (config_hash, run_id) = identity(config, &inputs);
    let root = options
        .output_dir
        .clone()
        .unwrap_or_else(|| config.resolve(&config.output_dir));
    let dir = root.join(&run_id);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;

    let execution = execute_graph(config)?;
    let mut manifest = BTreeMap::new();
    for (stage, files) in &execution.outputs {
        for (name, bytes) in files {
            write(&dir, &format!("stages/{stage}/{name}"), bytes, &mut manifest)?;
        }
    }
    let bias = emit_bias_report(config, &config.ledger)?;
    write(&dir, "bias_report.json", &pretty(&bias), &mut manifest)?;
    write(&dir, "bias_report.txt", bias.render().as_bytes(), &mut manifest)?;
    let mut canonical = config.clone();
    canonical.output_dir = PathBuf::new();
    write(&dir, "config.json", &pretty(&canonical), &mut manifest)?;
    let metadata = RunMetadata {
        run_id: run_id.clone(),
        pipeline: config.name.clone(),
        topology: config.topology.to_string(),
        seed: config.seed,
        config_hash,
        parent_run: config.parent_run.clone(),
        inputs,
        stages: execution.records,
    };
    write(&dir, "run.json", &pretty(&metadata), &mut manifest)?;
    let mut scratch = BTreeMap::new();
    write(&dir, MANIFEST, &pretty(&manifest), &mut scratch)?;
    let timing = serde_json::json!({
        "started_unix": started,
        "finished_unix": unix_now(),
        "stage_ms": execution.durations_ms,
    });
    write(&dir, TIMING, &pretty(&timing), &mut scratch)?;
    Ok(ReportBundle {
        dir,
        metadata,
        manifest,
    })
}

/// Loads a bundle written by [`run`] and checks every manifest hash.
pub fn open_bundle(dir: &Path) -> Result<ReportBundle, PipelineError> {
    let read = |name: &str| -> Result<String, PipelineError> {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|e| io(&path, e))
    };
    let parse = |e: serde_json::Error| PipelineError::Io(format!("{}: {e}", dir.display()));
    let metadata: RunMetadata = serde_json::from_str(&read("run.json")?).map_err(parse)?;
    let manifest: BTreeMap<String, String> = serde_json::from_str(&read(MANIFEST)?).map_err(parse)?;
    for (rel, hash) in &manifest {
        let path = dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| io(&path, e))?;
        if &sha256_hex(&bytes) != hash {
            return Err(PipelineError::ManifestMismatch(rel.clone()));
        }
    }
    Ok(ReportBundle {
        dir: dir.to_path_buf(),
        metadata,
        manifest,
    })
}

/// Triangulates the config's first latent class stage against the same
/// analysis of an alternate survey (same question schema). Results go to
/// `<output_dir>/<run_id>-verify-<alternate hash>/`.
pub fn verify(
    config: &PipelineConfig,
    alternate: &Path,
    threshold: Option<f64>,
    options: &RunOptions,
) -> Result<(PathBuf, TriangulationReport), PipelineError> {
    config.validate()?;
    let lca_stage = config
        .stages
        .iter()
        .find(|s| s.op == "lca.fit")
        .ok_or_else(|| PipelineError::ConfigValidation("no lca.fit stage to verify".into()))?;
    let inputs = input_hashes(config)?;
    let (_, run_id) = identity(config, &inputs);
    let execution = execute_graph(config)?;
    let Some(Artifact::Classes(main)) = execution.artifacts.get(&lca_stage.id) else {
        let cause = execution
            .records
            .iter()
            .find(|r| r.id == lca_stage.id)
            .map(|r| format!("{:?}", r.status))
            .unwrap_or_default();
        return Err(PipelineError::StageFailure {
            stage: lca_stage.id.clone(),
            cause,
        });
    };
    let survey_stage = config.stage(&lca_stage.inputs[0]).expect("validated input");
    let dataset = &config.datasets[survey_stage.dataset.as_deref().expect("validated dataset")];
    let schema = lca::SurveySchema::load(config.resolve(dataset.schema.as_ref().expect("schema")))
        .map_err(|e| PipelineError::Dataset {
            dataset: "schema".into(),
            detail: e.to_string(),
        })?;
    let alt_bytes = std::fs::read(alternate).map_err(|e| io(alternate, e))?;
    let alt_hash = sha256_hex(&alt_bytes);
    let dataset_err = |detail: String| PipelineError::Dataset {
        dataset: alternate.display().to_string(),
        detail,
    };
    let raw = RawSurvey::from_csv(&String::from_utf8_lossy(&alt_bytes), schema)
        .map_err(|e| dataset_err(e.to_string()))?;
    let data = lca::encode_indicators(&raw).map_err(|e| dataset_err(e.to_string()))?;
    let restarts = lca_stage
        .params
        .get("restarts")
        .and_then(|v| v.as_integer())
        .unwrap_or(10) as usize;
    let mode: AssignmentMode = lca_stage
        .params
        .get("assignment")
        .and_then(|v| v.as_str())
        .map(|s| if s == "soft" { AssignmentMode::Soft } else { AssignmentMode::Hard })
        .unwrap_or(AssignmentMode::Hard);
    let k = main.model.classes();
    let selection = lca::lca_select_k(&data, &[k], restarts, derive_seed(config.seed, "verify"))
        .map_err(|e| dataset_err(e.to_string()))?;
    let alt_dist = lca::group_class_distribution(&selection.models[0], &data, mode)
        .map_err(|e| dataset_err(e.to_string()))?;
    let alt_name = alternate
        .file_name()
        .map_or("alternate".to_string(), |n| n.to_string_lossy().into_owned());
    let report = triangulate(
        (main.dataset.as_str(), &main.distribution),
        &[(alt_name.as_str(), &alt_dist)],
        threshold.unwrap_or(DEFAULT_THRESHOLD),
    )?;
    let root = options
        .output_dir
        .clone()
        .unwrap_or_else(|| config.resolve(&config.output_dir));
    let dir = root.join(format!("{run_id}-verify-{}", &alt_hash[..8]));
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let mut manifest = BTreeMap::new();
    write(&dir, "alternate_group_distribution.csv", alt_dist.to_csv().as_bytes(), &mut manifest)?;
    write(&dir, "triangulation.json", &pretty(&report), &mut manifest)?;
    write(&dir, "triangulation.txt", report.render().as_bytes(), &mut manifest)?;
    let mut scratch = BTreeMap::new();
    write(&dir, MANIFEST, &pretty(&manifest), &mut scratch)?;
    Ok((dir, report))
}
