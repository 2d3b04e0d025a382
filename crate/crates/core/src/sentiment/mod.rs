//! Binary sentiment classification of coded segments, confusion-matrix
//! reporting and Kernel SHAP word attributions.

mod metrics;
mod model;
mod shap;

pub use metrics::{ConfusionMatrix, ConfusionMetrics, Ratio};
pub use model::{stratified_split, Objective, SentimentModel, TrainSettings};
pub use shap::{
    aggregate_negative_terms, explain_document, kernel_shap,
    word_cloud_csv, ShapExplanation, ShapValues, EXACT_MAX_FEATURES,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SentimentError {
    #[error("training data contains a single label")]
    SingleClassData,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("document has no in-vocabulary features to explain")]
    NoFeatures,
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("least-squares solve failed: {0}")]
    Solve(String),
}
