//! ABSA instances and their dependency parses.

mod conllu;
mod instance;
mod labels;
mod noise;
mod tree;

pub use conllu::{load_conllu, parse_conllu, write_conllu, write_conllu_string};
pub use instance::{
    load_instances, parse_instances, write_instances, AbsaInstance, AspectSpan, InstanceRecord,
    Polarity,
};
pub use labels::LabelInventory;
pub use noise::inject_parse_noise;
pub use tree::{Arc, DepTree, HeadRef, InsertToken, Token};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("sentence {sentence}: {msg}")]
    Structural { sentence: String, msg: String },
    #[error("record at line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("unknown polarity {0:?}")]
    UnknownPolarity(String),
    #[error("label {label:?} not in inventory (sentence {sentence})")]
    UnknownLabel { sentence: String, label: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;
