//! Model selection: UMass topic coherence and Tree-structured Parzen
//! Estimator search over quantized hyperparameter spaces.

mod coherence;
mod space;
mod tpe;

pub use coherence::{umass_coherence, CoherenceIndex};
pub use space::{ParamConfig, ParamKind, ParamSpec, SearchSpace};
pub use tpe::{
    optimize, optimize_with, random_search, tpe_suggest, tpe_suggest_with, trials_csv,
    TpeSettings, Trial, TuneOutcome,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TuneError {
    #[error("no topics to score")]
    EmptyTopics,
    #[error("coherence needs k >= 1")]
    InvalidTopN,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
    #[error("trial budget must be at least 1")]
    NoTrials,
}
