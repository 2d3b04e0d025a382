//! Bias-aware mixed-methods analysis toolkit.
//!
//! Text side: corpus ingestion, biterm and anchored CorEx topic models, UMass
//! coherence with TPE hyperparameter search, and a log-linear sentiment
//! classifier explained by Kernel SHAP. Survey side: one-hot indicator
//! encoding, latent class analysis by EM with BIC selection, and frequency
//! tables. The [`pipeline`] module wires these into declarative stage graphs
//! with a bias-provenance ledger and cross-dataset triangulation.

pub mod btm;
pub mod corpus;
pub mod csvfmt;
pub mod distribution;
pub mod hashing;
pub mod lca;
pub mod pipeline;
pub mod rng;
pub mod sentiment;
pub mod tune;
pub mod corex;
pub mod fixtures;
