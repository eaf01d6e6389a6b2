//! Synthetic corpora: sentiment modification, background rewriting and
//! non-target aspect addition, each gated by a confidence threshold.

mod aspect_add;
mod background;
mod confidence;
mod meteor;
mod opinion;
mod paraphrase;
mod sample;
mod sentiment_mod;
mod units;

pub use aspect_add::{
    gen_aspect_addition, gen_aspect_addition_with, graft_units, AspectAdditionConfig,
    AspectAdditionStats,
};
pub use background::{
    rewrite_background, rewrite_background_with, BackgroundConfig, BackgroundStats, SurfaceEdits,
};
pub use confidence::{
    addition_confidence, addition_retained, aspect_similarity, modification_confidence,
};
pub use meteor::{align, meteor};
pub use opinion::{locate_opinions, OpinionLink, OpinionRelation};
pub use paraphrase::{IdentityParaphraser, ParaphraseError, Paraphraser, StubParaphraser};
pub use sample::{load_samples, parse_samples, write_samples, SyntheticKind, SyntheticSample};
pub use sentiment_mod::{
    gen_sentiment_mod, gen_sentiment_mod_with, negation_target, SentimentModConfig,
    SentimentModStats,
};
pub use units::{build_aspect_units, unit_tokens, AspectUnit, Embedder, UnitToken, WordVectors};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{AbsaInstance, CorpusError};
use crate::lexicon::{LexiconError, NegationList, RelationLexicon, SentimentLexicon};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("modification confidence undefined: candidate has no non-target sentiment mass")]
    UndefinedConfidence,
    #[error("similarity undefined for a zero embedding")]
    ZeroEmbedding,
    #[error("embedding dimensions differ: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Paraphrase(#[from] ParaphraseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// The lexical resources consulted by the generators.
#[derive(Clone, Debug, Default)]
pub struct Lexicons {
    pub sentiment: SentimentLexicon,
    pub relations: RelationLexicon,
    pub negations: NegationList,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentConfig {
    pub sentiment: SentimentModConfig,
    pub background: BackgroundConfig,
    pub addition: AspectAdditionConfig,
}

/// Counts per confidence bin: `[0, 0.1)`, ..., `[0.9, 1.0)`, `[1.0, ∞)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfidenceHistogram {
    pub counts: [usize; 11],
}

impl ConfidenceHistogram {
    pub fn from_samples(samples: &[SyntheticSample]) -> Self {
        let mut h = Self::default();
        for s in samples {
            let bin = ((s.confidence * 10.0).floor().max(0.0) as usize).min(10);
            h.counts[bin] += 1;
        }
        h
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct KindSummary {
    pub emitted: usize,
    pub sources: usize,
    pub min_confidence: Option<f64>,
    pub histogram: ConfidenceHistogram,
}

impl KindSummary {
    fn of(samples: &[SyntheticSample]) -> Self {
        let mut sources: Vec<&str> = samples.iter().map(|s| s.source_id.as_str()).collect();
        sources.dedup();
        Self {
            emitted: samples.len(),
            sources: sources.len(),
            min_confidence: samples.iter().map(|s| s.confidence).reduce(f64::min),
            histogram: ConfidenceHistogram::from_samples(samples),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AugmentSummary {
    pub raw_instances: usize,
    pub aspect_units: usize,
    pub sentiment_mod: KindSummary,
    pub background: KindSummary,
    pub aspect_addition: KindSummary,
    pub sentiment_stats: SentimentModStats,
    pub background_stats: BackgroundStats,
    pub addition_stats: AspectAdditionStats,
}

#[derive(Clone, Debug, Default)]
pub struct AugmentOutput {
    pub sentiment_mod: Vec<SyntheticSample>,
    pub background: Vec<SyntheticSample>,
    pub aspect_addition: Vec<SyntheticSample>,
    pub units: Vec<AspectUnit>,
    pub summary: AugmentSummary,
}

impl AugmentOutput {
    /// All samples in canonical order.
    pub fn all(&self) -> Vec<SyntheticSample> {
        let mut v: Vec<SyntheticSample> = self
            .sentiment_mod
            .iter()
            .chain(&self.background)
            .chain(&self.aspect_addition)
            .cloned()
            .collect();
        v.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        v
    }
}

/// Run the three generators over a raw corpus. Output within each kind is
/// sorted by (source id, rank).
pub fn augment_corpus(
    raw: &[AbsaInstance],
    lex: &Lexicons,
    cfg: &AugmentConfig,
    paraphraser: &dyn Paraphraser,
    embedder: &dyn Embedder,
) -> AugmentOutput {
    let mut summary = AugmentSummary {
        raw_instances: raw.len(),
        ..Default::default()
    };
    let units = build_aspect_units(raw, embedder);
    summary.aspect_units = units.len();
    let mut da = Vec::new();
    let mut dn = Vec::new();
    let mut dm = Vec::new();
    for inst in raw {
        da.extend(gen_sentiment_mod_with(
            inst,
            lex,
            &cfg.sentiment,
            &mut summary.sentiment_stats,
        ));
        dn.extend(rewrite_background_with(
            inst,
            lex,
            &cfg.background,
            paraphraser,
            &mut summary.background_stats,
        ));
        dm.extend(gen_aspect_addition_with(
            inst,
            &units,
            embedder,
            &cfg.addition,
            &mut summary.addition_stats,
        ));
    }
    let (da, dn, dm) = (
        sample::finalize(da),
        sample::finalize(dn),
        sample::finalize(dm),
    );
    summary.sentiment_mod = KindSummary::of(&da);
    summary.background = KindSummary::of(&dn);
    summary.aspect_addition = KindSummary::of(&dm);
    AugmentOutput {
        sentiment_mod: da,
        background: dn,
        aspect_addition: dm,
        units,
        summary,
    }
}
