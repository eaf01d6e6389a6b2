//! Sentiment-strength scores, synonym/antonym relations and negation words.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::corpus::Polarity;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("{word}/{upos}: {target:?} listed as both synonym and antonym")]
    Conflict {
        word: String,
        upos: String,
        target: String,
    },
    #[error("negation list is empty")]
    EmptyNegations,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LexiconError>;

/// Strength `a(O, C)` of a word towards each polarity, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SentimentScores {
    pub positive: f64,
    pub negative: f64,
    pub neutral: f64,
}

impl SentimentScores {
    pub fn new(positive: f64, neutral: f64, negative: f64) -> Self {
        Self {
            positive,
            negative,
            neutral,
        }
    }

    pub fn get(&self, p: Polarity) -> f64 {
        match p {
            Polarity::Positive => self.positive,
            Polarity::Negative => self.negative,
            Polarity::Neutral => self.neutral,
        }
    }

    /// The strongest polarity, ties broken in [`Polarity::ALL`] order.
    pub fn dominant(&self) -> Polarity {
        let mut best = Polarity::Positive;
        for p in Polarity::ALL {
            if self.get(p) > self.get(best) {
                best = p;
            }
        }
        best
    }

    /// Strictly more neutral than either polar class.
    pub fn is_neutral_dominant(&self) -> bool {
        self.neutral > self.positive && self.neutral > self.negative
    }

    /// Scores of the negated expression: positive and negative swap places.
    pub fn negated(&self) -> Self {
        Self {
            positive: self.negative,
            negative: self.positive,
            neutral: self.neutral,
        }
    }

    /// `1 - TV(p, q)` over the score vectors normalized to sum to one; 1 for
    /// identical profiles, 0 for disjoint ones.
    pub fn agreement(&self, other: &SentimentScores) -> f64 {
        let norm = |s: &SentimentScores| {
            let t = s.positive + s.negative + s.neutral;
            if t <= 0.0 {
                [1.0 / 3.0; 3]
            } else {
                [s.positive / t, s.negative / t, s.neutral / t]
            }
        };
        let (p, q) = (norm(self), norm(other));
        1.0 - 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    fn scaled(&self, k: f64) -> Self {
        Self::new(self.positive * k, self.neutral * k, self.negative * k)
    }

    fn plus(&self, o: &Self) -> Self {
        Self::new(
            self.positive + o.positive,
            self.neutral + o.neutral,
            self.negative + o.negative,
        )
    }
}

/// Word-level sentiment scores keyed by (lowercased form, UPOS).
#[derive(Clone, Debug, Default)]
pub struct SentimentLexicon {
    entries: BTreeMap<(String, String), SentimentScores>,
    by_word: BTreeMap<String, SentimentScores>,
    duplicates: usize,
}

impl SentimentLexicon {
    /// Rows are `word<TAB>UPOS<TAB>pos<TAB>neu<TAB>neg`. Repeated keys (one
    /// row per synset) are averaged; [`Self::duplicate_rows`] counts them.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sums: BTreeMap<(String, String), (SentimentScores, usize)> = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let row = |msg: String| LexiconError::Row { line: k + 1, msg };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(row(format!("expected 5 columns, found {}", cols.len())));
            }
            let mut scores = [0.0; 3];
            for (s, col) in scores.iter_mut().zip(&cols[2..]) {
                *s = col
                    .trim()
                    .parse()
                    .map_err(|_| row(format!("bad score {col:?}")))?;
                if !(0.0..=1.0).contains(s) {
                    return Err(row(format!("score {s} outside [0, 1]")));
                }
            }
            let key = (cols[0].to_lowercase(), cols[1].to_string());
            let entry = SentimentScores::new(scores[0], scores[1], scores[2]);
            sums.entry(key)
                .and_modify(|(acc, n)| {
                    *acc = acc.plus(&entry);
                    *n += 1;
                })
                .or_insert((entry, 1));
        }
        let mut lex = Self::default();
        let mut word_sums: BTreeMap<String, (SentimentScores, usize)> = BTreeMap::new();
        for ((word, upos), (sum, n)) in sums {
            lex.duplicates += n - 1;
            let avg = sum.scaled(1.0 / n as f64);
            word_sums
                .entry(word.clone())
                .and_modify(|(acc, m)| {
                    *acc = acc.plus(&avg);
                    *m += 1;
                })
                .or_insert((avg, 1));
            lex.entries.insert((word, upos), avg);
        }
        lex.by_word = word_sums
            .into_iter()
            .map(|(w, (s, m))| (w, s.scaled(1.0 / m as f64)))
            .collect();
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn duplicate_rows(&self) -> usize {
        self.duplicates
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact (word, UPOS) entry.
    pub fn lookup_exact(&self, word: &str, upos: &str) -> Option<SentimentScores> {
        self.entries
            .get(&(word.to_lowercase(), upos.to_string()))
            .copied()
    }

    /// Exact entry, falling back to the mean over the word's other tags.
    /// `None` means the lexicon has no sentiment information for the word.
    pub fn lookup(&self, word: &str, upos: &str) -> Option<SentimentScores> {
        self.lookup_exact(word, upos)
            .or_else(|| self.by_word.get(&word.to_lowercase()).copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &SentimentScores)> {
        self.entries
            .iter()
            .map(|((w, u), s)| (w.as_str(), u.as_str(), s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Synonym,
    Antonym,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelatedWords {
    pub synonyms: Vec<String>,
    pub antonyms: Vec<String>,
}

/// Synonym/antonym candidates keyed by (lowercased word, UPOS). A relation
/// row shares the UPOS of its key.
#[derive(Clone, Debug, Default)]
pub struct RelationLexicon {
    entries: BTreeMap<(String, String), RelatedWords>,
}

impl RelationLexicon {
    /// Rows are `word<TAB>UPOS<TAB>synonym|antonym<TAB>target`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Self::default();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let row = |msg: String| LexiconError::Row { line: k + 1, msg };
            let cols: Vec<&str> = line.split('\t').collect();
            let [word, upos, rel, target] = cols.as_slice() else {
                return Err(row(format!("expected 4 columns, found {}", cols.len())));
            };
            let rel = match *rel {
                "synonym" => Relation::Synonym,
                "antonym" => Relation::Antonym,
                other => return Err(row(format!("unknown relation {other:?}"))),
            };
            lex.insert(word, upos, rel, target)?;
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, word: &str, upos: &str, rel: Relation, target: &str) -> Result<()> {
        let (word, target) = (word.to_lowercase(), target.to_lowercase());
        if word == target {
            return Ok(());
        }
        let entry = self
            .entries
            .entry((word.clone(), upos.to_string()))
            .or_default();
        let (mine, other) = match rel {
            Relation::Synonym => (&mut entry.synonyms, &entry.antonyms),
            Relation::Antonym => (&mut entry.antonyms, &entry.synonyms),
        };
        if other.contains(&target) {
            return Err(LexiconError::Conflict {
                word,
                upos: upos.to_string(),
                target,
            });
        }
        if !mine.contains(&target) {
            mine.push(target);
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &RelatedWords)> {
        self.entries
            .iter()
            .map(|((w, u), r)| (w.as_str(), u.as_str(), r))
    }

    pub fn candidates_for(&self, word: &str, upos: &str, relation: Relation) -> &[String] {
        match self.entries.get(&(word.to_lowercase(), upos.to_string())) {
            Some(r) => match relation {
                Relation::Synonym => &r.synonyms,
                Relation::Antonym => &r.antonyms,
            },
            None => &[],
        }
    }
}

/// Free-function form of [`RelationLexicon::candidates_for`].
pub fn candidates_for(
    word: &str,
    upos: &str,
    relation: Relation,
    lex: &RelationLexicon,
) -> Vec<String> {
    lex.candidates_for(word, upos, relation).to_vec()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegationList {
    words: Vec<String>,
}

impl NegationList {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.is_empty() {
            return Err(LexiconError::EmptyNegations);
        }
        Ok(Self { words })
    }

    /// One token per line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// The word used for insertion.
    pub fn primary(&self) -> &str {
        &self.words[0]
    }

    pub fn contains(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.words.contains(&w)
    }
}

impl Default for NegationList {
    fn default() -> Self {
        Self {
            words: vec!["not".into(), "n't".into(), "never".into()],
        }
    }
}
