//! Batch entry points: augmentation, training, evaluation, gradient checks
//! and the parse round trip for rewritten sentences.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::*;
pub use config::{RunConfig, CONFIG_ENV};
pub use error::{CliError, Result};
