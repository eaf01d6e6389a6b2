use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, AbsaInstance, CorpusError, DepTree, InstanceRecord};

use super::{AugmentError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SyntheticKind {
    SentimentMod,
    BackgroundRewrite,
    AspectAddition,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [
        SyntheticKind::SentimentMod,
        SyntheticKind::BackgroundRewrite,
        SyntheticKind::AspectAddition,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> SyntheticKind {
        Self::ALL[k]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::SentimentMod => "SentimentMod",
            SyntheticKind::BackgroundRewrite => "BackgroundRewrite",
            SyntheticKind::AspectAddition => "AspectAddition",
        }
    }

    fn code(self) -> char {
        match self {
            SyntheticKind::SentimentMod => 'a',
            SyntheticKind::BackgroundRewrite => 'n',
            SyntheticKind::AspectAddition => 'm',
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| AugmentError::Format(format!("unknown synthetic kind {s:?}")))
    }
}

/// A generated instance tied to the raw instance it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub source_id: String,
    pub kind: SyntheticKind,
    /// Position among the samples of the same source and kind.
    pub rank: usize,
    pub instance: AbsaInstance,
    pub confidence: f64,
    pub needs_reparse: bool,
    /// The modification asked for a different polarity.
    pub flip: bool,
    /// Indices of the grafted aspect units.
    pub added_units: Vec<usize>,
}

impl SyntheticSample {
    pub fn new(
        source: &AbsaInstance,
        kind: SyntheticKind,
        instance: AbsaInstance,
        confidence: f64,
    ) -> Self {
        Self {
            source_id: source.id.clone(),
            kind,
            rank: 0,
            instance,
            confidence,
            needs_reparse: false,
            flip: false,
            added_units: Vec::new(),
        }
    }

    pub fn sample_id(source_id: &str, kind: SyntheticKind, rank: usize) -> String {
        format!("{source_id}~{}{rank}", kind.code())
    }

    pub fn id(&self) -> &str {
        &self.instance.id
    }

    pub fn tree(&self) -> &DepTree {
        &self.instance.tree
    }

    /// Canonical ordering key.
    pub fn sort_key(&self) -> (&str, SyntheticKind, usize) {
        (&self.source_id, self.kind, self.rank)
    }
}

/// Sort by (source id, kind, rank) and assign ranks and ids per source and
/// kind in emission order.
pub(crate) fn finalize(mut samples: Vec<SyntheticSample>) -> Vec<SyntheticSample> {
    let mut counter: std::collections::BTreeMap<(String, SyntheticKind), usize> =
        Default::default();
    for s in &mut samples {
        let r = counter.entry((s.source_id.clone(), s.kind)).or_default();
        s.rank = *r;
        *r += 1;
        s.instance.id = SyntheticSample::sample_id(&s.source_id, s.kind, s.rank);
    }
    samples.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    samples
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    #[serde(flatten)]
    record: InstanceRecord,
    kind: SyntheticKind,
    confidence: f64,
    source_id: String,
    rank: usize,
    needs_reparse: bool,
    #[serde(default)]
    flip: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    added_units: Vec<usize>,
}

/// Records (one JSON object per line) plus the CoNLL-U file they index.
pub fn write_samples(samples: &[SyntheticSample], records: &Path, parses: &Path) -> Result<()> {
    let mut text = String::new();
    for (k, s) in samples.iter().enumerate() {
        let rec = SampleRecord {
            record: InstanceRecord::from_instance(&s.instance, k),
            kind: s.kind,
            confidence: s.confidence,
            source_id: s.source_id.clone(),
            rank: s.rank,
            needs_reparse: s.needs_reparse,
            flip: s.flip,
            added_units: s.added_units.clone(),
        };
        text.push_str(&serde_json::to_string(&rec).expect("sample record serializes"));
        text.push('\n');
    }
    fs::write(records, text)?;
    let trees: Vec<DepTree> = samples.iter().map(|s| s.instance.tree.clone()).collect();
    corpus::write_conllu(&trees, parses)?;
    Ok(())
}

pub fn parse_samples(text: &str, trees: &[DepTree]) -> Result<Vec<SyntheticSample>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(line).map_err(|e| CorpusError::Record {
            line: k + 1,
            msg: e.to_string(),
        })?;
        let instance = rec.record.resolve(trees, k + 1)?;
        out.push(SyntheticSample {
            source_id: rec.source_id,
            kind: rec.kind,
            rank: rec.rank,
            instance,
            confidence: rec.confidence,
            needs_reparse: rec.needs_reparse,
            flip: rec.flip,
            added_units: rec.added_units,
        });
    }
    Ok(out)
}

pub fn load_samples(records: &Path, parses: &Path) -> Result<Vec<SyntheticSample>> {
    let trees = corpus::load_conllu(parses)?;
    parse_samples(&fs::read_to_string(records)?, &trees)
}
