use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::corpus::AbsaInstance;

use super::{ModelError, Result};

pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Lowercased word types; ids 0..3 are `[UNK]`, `[CLS]`, `[SEP]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in [UNK, CLS, SEP] {
            v.push(s.to_string());
        }
        for w in words {
            v.push(w.as_ref().to_lowercase());
        }
        v
    }

    fn push(&mut self, w: String) {
        if !self.index.contains_key(&w) {
            self.index.insert(w.clone(), self.tokens.len());
            self.tokens.push(w);
        }
    }

    /// Every word of the given corpora, sorted.
    pub fn from_corpora(corpora: &[&[AbsaInstance]]) -> Self {
        let words: BTreeSet<String> = corpora
            .iter()
            .flat_map(|c| c.iter())
            .flat_map(|inst| inst.tree.tokens().iter().map(|t| t.form.to_lowercase()))
            .collect();
        Self::new(words)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn cls(&self) -> usize {
        1
    }

    pub fn sep(&self) -> usize {
        2
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, specials first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        if lines.len() < 3 || lines[..3] != [UNK, CLS, SEP] {
            return Err(ModelError::Config(format!(
                "{}: vocabulary must start with {UNK}, {CLS}, {SEP}",
                path.display()
            )));
        }
        Ok(Self::new(&lines[3..]))
    }
}
