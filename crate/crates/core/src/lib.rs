//! Robust aspect-based sentiment analysis: a syntax-aware graph attention
//! classifier over dependency parses, rule-based synthetic corpus
//! generators, and adversarial/contrastive training regimes.

pub mod augment;
pub mod corpus;
pub mod eval;
pub mod kv;
pub mod lexicon;
pub mod model;
pub mod toy;
pub mod training;
