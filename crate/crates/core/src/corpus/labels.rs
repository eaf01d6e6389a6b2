use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{CorpusError, DepTree, Result};

/// Universal Dependencies v2 relations, plus `dobj` and `neg` which older
/// parsers still emit.
const UNIVERSAL: &[&str] = &[
    "acl",
    "advcl",
    "advmod",
    "amod",
    "appos",
    "aux",
    "case",
    "cc",
    "ccomp",
    "clf",
    "compound",
    "conj",
    "cop",
    "csubj",
    "dep",
    "det",
    "discourse",
    "dislocated",
    "dobj",
    "expl",
    "fixed",
    "flat",
    "goeswith",
    "iobj",
    "list",
    "mark",
    "neg",
    "nmod",
    "nsubj",
    "nummod",
    "obj",
    "obl",
    "orphan",
    "parataxis",
    "punct",
    "reparandum",
    "root",
    "vocative",
    "xcomp",
];

/// The declared set of dependency relation labels. Labels are matched on
/// their base (the part before any `:` subtype).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelInventory {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl LabelInventory {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut inv = Self {
            labels: Vec::new(),
            index: BTreeMap::new(),
        };
        for l in labels {
            let l = l.into();
            if !inv.index.contains_key(&l) {
                inv.index.insert(l.clone(), inv.labels.len());
                inv.labels.push(l);
            }
        }
        inv
    }

    pub fn universal() -> Self {
        Self::new(UNIVERSAL.iter().copied())
    }

    /// One label per line; blank lines and `#` comments ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        let base = label.split(':').next().unwrap_or(label);
        self.index.get(base).copied()
    }

    pub fn validate(&self, tree: &DepTree) -> Result<()> {
        for arc in tree.arcs() {
            if self.id(&arc.label).is_none() {
                return Err(CorpusError::UnknownLabel {
                    sentence: tree.sent_id().map_or_else(|| tree.text(), str::to_string),
                    label: arc.label,
                });
            }
        }
        Ok(())
    }
}

impl Default for LabelInventory {
    fn default() -> Self {
        Self::universal()
    }
}
