//! Declarative stage graphs over the analysis modules, with a bias
//! provenance ledger, model comparison and cross-dataset triangulation.

mod compare;
mod config;
mod ledger;
mod run;
mod stages;
mod triangulate;

pub use compare::{
    compare_topic_models, jaccard, ComparisonReport, ModelSummary, PairComparison, TopicMatch,
    TopicModelResult,
};
pub use config::{ArtifactKind, DatasetKind, DatasetSpec, Op, PipelineConfig, StageSpec, Topology};
pub use ledger::{
    emit_bias_report, validate_ledger, BiasLedgerEntry, BiasReport, BiasSource, Mitigation,
    StageSection, UnmitigatedFlag,
};
pub use run::{
    open_bundle, run, verify, ReportBundle, RunMetadata, RunOptions, StageRecord, StageStatus,
    MANIFEST, TIMING,
};
pub use stages::{btm_config, corex_config, tune_btm, tune_corex};
pub use triangulate::{
    total_variation, triangulate, DatasetHeterogeneity, GroupPairDistance, TriangulationReport,
    DEFAULT_THRESHOLD,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    ConfigValidation(String),
    #[error("stage {stage} failed: {cause}")]
    StageFailure { stage: String, cause: String },
    #[error("ledger references unknown stage {0:?}")]
    UnknownStage(String),
    #[error("models {first:?} and {other:?} were fit on different vocabularies")]
    VocabularyMismatch { first: String, other: String },
    #[error("{alternate:?} covers different groups than {main:?}")]
    GroupLabelMismatch { main: String, alternate: String },
    #[error("comparison: {0}")]
    Comparison(String),
    #[error("triangulation: {0}")]
    Triangulation(String),
    #[error("dataset {dataset:?}: {detail}")]
    Dataset { dataset: String, detail: String },
    #[error("bundle file {0} does not match its manifest hash")]
    ManifestMismatch(String),
    #[error("{0}")]
    Io(String),
}
