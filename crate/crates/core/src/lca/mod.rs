//! Latent class analysis of categorical survey responses, with indicator
//! encoding and exploratory frequency tables.

mod model;
mod survey;

pub use model::{
    adjusted_rand_index, group_class_distribution, lca_fit, lca_select_k, posterior_membership,
    LatentClassModel, LcaConfig, Selection, RHO_CEIL, RHO_FLOOR,
};
pub use survey::{
    eda_frequencies, eda_stratified, encode_indicators, frequency_csv, indicator_name,
    FrequencyRow, FrequencyTable, Question, QuestionKind, RawRespondent, RawSurvey,
    SurveyDataset, SurveySchema, MULTI_SEPARATOR,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LcaError {
    #[error("survey has no respondents or no indicators")]
    DegenerateData,
    #[error("cannot fit {classes} classes to {respondents} respondents")]
    InvalidClassCount { classes: usize, respondents: usize },
    #[error("question {question:?} has no option {option:?}")]
    UnknownOption { question: String, option: String },
    #[error("unknown question {0:?}")]
    UnknownQuestion(String),
    #[error("respondent without a group label: {0}")]
    UnknownGroup(String),
    #[error("{0}")]
    Io(String),
    #[error("malformed survey input: {0}")]
    Parse(String),
}
