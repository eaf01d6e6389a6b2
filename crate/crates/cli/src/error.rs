use rabsa_core::augment::AugmentError;
use rabsa_core::corpus::CorpusError;
use rabsa_core::kv::KvError;
use rabsa_core::lexicon::LexiconError;
use rabsa_core::model::ModelError;
use rabsa_core::training::TrainError;
use thiserror::Error;

/// Exit status 2 for problems the user can fix, 1 for everything else.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Input {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Autodiff(#[from] rabsa_autodiff::AutodiffError),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Input { .. }
            | CliError::Kv(_)
            | CliError::Lexicon(_) => 2,
            CliError::Corpus(_) => 2,
            CliError::Augment(e) => match e {
                AugmentError::Lexicon(_) | AugmentError::Corpus(_) | AugmentError::Format(_) => 2,
                AugmentError::Dimension { .. } => 2,
                _ => 1,
            },
            CliError::Model(e) => match e {
                ModelError::Config(_) | ModelError::Kv(_) | ModelError::Corpus(_) => 2,
                ModelError::UnknownLabel(_)
                | ModelError::EmptyAspect(_)
                | ModelError::TooLong { .. } => 2,
                _ => 1,
            },
            CliError::Train(e) => match e {
                TrainError::Config(_)
                | TrainError::MissingCorpus(_)
                | TrainError::UnresolvedSource(_) => 2,
                TrainError::Model(
                    ModelError::Config(_)
                    | ModelError::UnknownLabel(_)
                    | ModelError::TooLong { .. },
                ) => 2,
                _ => 1,
            },
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
