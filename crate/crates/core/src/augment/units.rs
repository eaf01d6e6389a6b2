use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::corpus::{AbsaInstance, Polarity};

use super::opinion::{locate_opinions, OpinionRelation};
use super::{AugmentError, Result};

/// Maps a token sequence to a dense vector; `None` when nothing is known
/// about any of the tokens.
pub trait Embedder {
    fn embed(&self, words: &[String]) -> Option<Vec<f64>>;
}

/// Pretrained word vectors; a sequence embeds to the mean of its known
/// (lowercased) words.
#[derive(Clone, Debug, Default)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    /// One word per line followed by its components, whitespace-separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut wv = WordVectors::default();
        for (k, line) in text.lines().enumerate() {
            let mut cols = line.split_whitespace();
            let Some(word) = cols.next() else { continue };
            let v: Vec<f64> = cols
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| AugmentError::Format(format!("word vectors line {}: {e}", k + 1)))?;
            if wv.dim == 0 {
                wv.dim = v.len();
            }
            if v.is_empty() || v.len() != wv.dim {
                return Err(AugmentError::Format(format!(
                    "word vectors line {}: expected {} components, found {}",
                    k + 1,
                    wv.dim,
                    v.len()
                )));
            }
            wv.vectors.insert(word.to_lowercase(), v);
        }
        Ok(wv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(&word.to_lowercase()).map(Vec::as_slice)
    }
}

impl Embedder for WordVectors {
    fn embed(&self, words: &[String]) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for w in words {
            if let Some(v) = self.get(w) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitToken {
    pub form: String,
    pub lemma: Option<String>,
    pub upos: String,
    /// Head as a position within the unit; `None` for the unit root.
    pub head: Option<usize>,
    pub label: String,
}

/// The smallest dependency fragment holding an aspect and one of its
/// opinions, with its function-word dependents.
#[derive(Clone, Debug, PartialEq)]
pub struct AspectUnit {
    pub source_id: String,
    pub tokens: Vec<UnitToken>,
    /// Position of the aspect head within `tokens`.
    pub aspect_head: usize,
    /// Positions of the aspect tokens within `tokens`.
    pub aspect: Vec<usize>,
    pub relation: OpinionRelation,
    pub polarity: Polarity,
    pub embedding: Vec<f64>,
}

impl AspectUnit {
    pub fn forms(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.form.clone()).collect()
    }

    pub fn aspect_forms(&self) -> Vec<String> {
        self.aspect
            .iter()
            .map(|&k| self.tokens[k].form.clone())
            .collect()
    }

    pub fn root(&self) -> usize {
        self.tokens
            .iter()
            .position(|t| t.head.is_none())
            .expect("unit has a root")
    }

    pub fn text(&self) -> String {
        self.forms().join(" ")
    }
}

const CLOSURE: &[&str] = &[
    "det", "compound", "cop", "advmod", "aux", "nummod", "case", "neg", "fixed", "flat",
];

/// Token indices of the unit for an aspect span and an opinion set.
pub fn unit_tokens(inst: &AbsaInstance, opinion: &BTreeSet<usize>) -> Vec<usize> {
    let tree = &inst.tree;
    let core: Vec<usize> = inst
        .aspect
        .indices()
        .chain(opinion.iter().copied())
        .collect();
    let top = tree.lowest_common_ancestor(&core);
    let mut members: BTreeSet<usize> = BTreeSet::from([top]);
    for &t in &core {
        let mut cur = t;
        while cur != top && cur != 0 {
            members.insert(cur);
            cur = tree.head(cur);
        }
    }
    let mut frontier: Vec<usize> = members.iter().copied().collect();
    while let Some(m) = frontier.pop() {
        for c in tree.children(m) {
            let keep = tree.label(c) == "nmod:poss" || CLOSURE.contains(&tree.base_label(c));
            if keep && members.insert(c) {
                frontier.push(c);
            }
        }
    }
    members.into_iter().collect()
}

/// One unit per located opinion in the corpus, in corpus order. Links whose
/// aspect the embedder knows nothing about are skipped.
pub fn build_aspect_units(corpus: &[AbsaInstance], embedder: &dyn Embedder) -> Vec<AspectUnit> {
    let mut out = Vec::new();
    for inst in corpus {
        let Some(embedding) = embedder.embed(&inst.aspect_forms()) else {
            continue;
        };
        let tree = &inst.tree;
        for link in locate_opinions(inst) {
            let idx = unit_tokens(inst, &link.opinion);
            let pos = |t: usize| idx.iter().position(|&x| x == t);
            let tokens = idx
                .iter()
                .map(|&t| {
                    let tok = tree.token(t);
                    UnitToken {
                        form: tok.form.clone(),
                        lemma: tok.lemma.clone(),
                        upos: tok.upos.clone(),
                        head: pos(tree.head(t)),
                        label: tree.label(t).to_string(),
                    }
                })
                .collect();
            out.push(AspectUnit {
                source_id: inst.id.clone(),
                tokens,
                aspect_head: pos(inst.aspect_head()).expect("aspect in unit"),
                aspect: inst.aspect.indices().filter_map(pos).collect(),
                relation: link.relation,
                polarity: inst.label,
                embedding: embedding.clone(),
            });
        }
    }
    out
}
