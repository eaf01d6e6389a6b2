//! The four training regimes: cross-entropy, adversarial min-max over
//! raw/synthetic pairs, and either of them joined with contrastive
//! objectives.

mod batch;
mod config;
mod discriminator;
mod gradcheck;
mod losses;
mod trainer;

pub use batch::{BatchPlan, ContrastiveSet, Families, Planner};
pub use config::{Regime, TrainConfig};
pub use discriminator::{Discriminator, DISCRIMINATOR_PREFIX};
pub use gradcheck::{check_regime, param_group, GroupCheck, MODEL_STEP};
pub use losses::{ce_sum, contrastive_term, contrastive_value, matcher, Scheme};
pub use trainer::{
    accuracy, batch_graph, discriminator_accuracy, label_indices, pair_cosines, predictions,
    prepare_model, train, BatchDump, BatchGraph, Corpora, LossComponents, Networks, PairCosines,
    Prepared, TrainSummary,
};

use rabsa_autodiff::AutodiffError;
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{0}")]
    MissingCorpus(String),
    #[error("synthetic sample refers to unknown source {0:?}")]
    UnresolvedSource(String),
    #[error("{0}")]
    Structure(String),
    #[error("non-finite loss at iteration {}", .0.iteration)]
    NonFinite(Box<BatchDump>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
