use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusError, DepTree, Result};

/// Sentiment class. The declaration order is the argmax tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Polarity {
        Self::ALL[k]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            _ => Err(CorpusError::UnknownPolarity(s.to_string())),
        }
    }
}

/// Token span `[start, end)` with 1-based token indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AspectSpan {
    pub start: usize,
    pub end: usize,
}

impl AspectSpan {
    /// Checks `1 <= start < end <= n + 1`.
    pub fn new(start: usize, end: usize, sentence_len: usize) -> Option<Self> {
        (start >= 1 && start < end && end <= sentence_len + 1).then_some(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start..self.end).contains(&index)
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    /// Shift through an index remap produced by [`DepTree::insert`].
    pub fn remapped(&self, remap: &[usize]) -> Self {
        Self {
            start: remap[self.start],
            end: remap[self.end - 1] + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbsaInstance {
    pub id: String,
    pub tree: DepTree,
    pub aspect: AspectSpan,
    pub label: Polarity,
    pub subset_tags: BTreeSet<String>,
    pub gold_opinion: Option<BTreeSet<usize>>,
}

impl AbsaInstance {
    pub fn new(id: impl Into<String>, tree: DepTree, aspect: AspectSpan, label: Polarity) -> Self {
        Self {
            id: id.into(),
            tree,
            aspect,
            label,
            subset_tags: BTreeSet::new(),
            gold_opinion: None,
        }
    }

    pub fn aspect_forms(&self) -> Vec<String> {
        self.aspect
            .indices()
            .map(|i| self.tree.token(i).form.clone())
            .collect()
    }

    /// The aspect token whose head lies outside the span (the first one, if
    /// the span is not a single subtree).
    pub fn aspect_head(&self) -> usize {
        self.aspect
            .indices()
            .find(|&i| !self.aspect.contains(self.tree.head(i)))
            .unwrap_or(self.aspect.start)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if AspectSpan::new(self.aspect.start, self.aspect.end, self.tree.len()).is_none() {
            return Err(format!(
                "aspect span [{}, {}) out of range for {} tokens",
                self.aspect.start,
                self.aspect.end,
                self.tree.len()
            ));
        }
        if let Some(op) = &self.gold_opinion {
            if let Some(bad) = op.iter().find(|&&i| i == 0 || i > self.tree.len()) {
                return Err(format!("opinion index {bad} out of range"));
            }
        }
        Ok(())
    }
}

/// One line of an instance file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Index of the sentence in the companion CoNLL-U file.
    pub sentence: usize,
    /// `[start, end)`, 1-based token indices.
    pub aspect: [usize; 2],
    pub polarity: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinion: Option<Vec<usize>>,
}

impl InstanceRecord {
    pub fn from_instance(inst: &AbsaInstance, sentence: usize) -> Self {
        Self {
            id: Some(inst.id.clone()),
            sentence,
            aspect: [inst.aspect.start, inst.aspect.end],
            polarity: inst.label.to_string(),
            tags: inst.subset_tags.iter().cloned().collect(),
            opinion: inst
                .gold_opinion
                .as_ref()
                .map(|s| s.iter().copied().collect()),
        }
    }

    /// Join to a tree and validate. `line` is used for error messages only.
    pub fn resolve(&self, trees: &[DepTree], line: usize) -> Result<AbsaInstance> {
        let err = |msg: String| CorpusError::Record { line, msg };
        let tree = trees.get(self.sentence).ok_or_else(|| {
            err(format!(
                "sentence {} not in parse file ({} trees)",
                self.sentence,
                trees.len()
            ))
        })?;
        let [start, end] = self.aspect;
        let aspect = AspectSpan::new(start, end, tree.len()).ok_or_else(|| {
            err(format!(
                "aspect span [{start}, {end}) out of range for {} tokens",
                tree.len()
            ))
        })?;
        let label: Polarity = self
            .polarity
            .parse()
            .map_err(|e: CorpusError| err(e.to_string()))?;
        let inst = AbsaInstance {
            id: self
                .id
                .clone()
                .unwrap_or_else(|| format!("s{}-{}-{}", self.sentence, start, end)),
            tree: tree.clone(),
            aspect,
            label,
            subset_tags: self.tags.iter().cloned().collect(),
            gold_opinion: self.opinion.as_ref().map(|v| v.iter().copied().collect()),
        };
        inst.validate().map_err(err)?;
        Ok(inst)
    }
}

pub fn parse_instances(text: &str, trees: &[DepTree]) -> Result<Vec<AbsaInstance>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord = serde_json::from_str(line).map_err(|e| CorpusError::Record {
            line: k + 1,
            msg: e.to_string(),
        })?;
        out.push(rec.resolve(trees, k + 1)?);
    }
    Ok(out)
}

pub fn load_instances(path: &Path, trees: &[DepTree]) -> Result<Vec<AbsaInstance>> {
    parse_instances(&fs::read_to_string(path)?, trees)
}

/// Write instances as records plus the parse file they point into. Each
/// instance gets its own tree in the CoNLL-U output.
pub fn write_instances(instances: &[AbsaInstance], records: &Path, parses: &Path) -> Result<()> {
    let mut lines = String::new();
    let mut trees = Vec::with_capacity(instances.len());
    for (k, inst) in instances.iter().enumerate() {
        let rec = InstanceRecord::from_instance(inst, k);
        lines.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        lines.push('\n');
        trees.push(inst.tree.clone());
    }
    fs::write(records, lines)?;
    super::write_conllu(&trees, parses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_conllu;

    fn trees() -> Vec<DepTree> {
        parse_conllu(
            "1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n2\tfood\tfood\tNOUN\t_\t_\t0\troot\t_\t_\n",
        )
        .unwrap()
    }

    #[test]
    fn record_maps_to_aspect() {
        let insts = parse_instances(
            r#"{"sentence":0,"aspect":[2,3],"polarity":"Positive"}"#,
            &trees(),
        )
        .unwrap();
        assert_eq!(insts[0].aspect_forms(), vec!["food"]);
        assert_eq!(insts[0].label, Polarity::Positive);
        assert!(insts[0].subset_tags.is_empty());
    }

    #[test]
    fn span_out_of_range() {
        let r = parse_instances(
            r#"{"sentence":0,"aspect":[5,6],"polarity":"positive"}"#,
            &trees(),
        );
        assert!(matches!(r, Err(CorpusError::Record { line: 1, .. })));
    }

    #[test]
    fn unknown_polarity() {
        let r = parse_instances(
            r#"{"sentence":0,"aspect":[2,3],"polarity":"mixed"}"#,
            &trees(),
        );
        match r {
            Err(CorpusError::Record { msg, .. }) => assert!(msg.contains("mixed")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tags_are_kept() {
        let insts = parse_instances(
            r#"{"sentence":0,"aspect":[2,3],"polarity":"negative","tags":["REVTGT"],"opinion":[1]}"#,
            &trees(),
        )
        .unwrap();
        assert_eq!(insts[0].subset_tags, BTreeSet::from(["REVTGT".to_string()]));
        assert_eq!(insts[0].gold_opinion, Some(BTreeSet::from([1])));
    }

    #[test]
    fn polarity_order_is_tie_break_order() {
        assert!(Polarity::Positive < Polarity::Negative && Polarity::Negative < Polarity::Neutral);
        for p in Polarity::ALL {
            assert_eq!(Polarity::from_index(p.index()), p);
            assert_eq!(p.to_string().parse::<Polarity>().unwrap(), p);
        }
    }
}
