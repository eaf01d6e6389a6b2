use std::collections::BTreeMap;

use thiserror::Error;

use crate::lexicon::RelationLexicon;

#[derive(Debug, Error)]
#[error("paraphrase failed: {0}")]
pub struct ParaphraseError(pub String);

/// Sentence-level rewriter. `pinned` is the aspect term, which the rewriter
/// should leave intact. Input and output are whitespace-tokenized.
pub trait Paraphraser {
    fn paraphrase(&self, sentence: &str, pinned: &str) -> Result<String, ParaphraseError>;
}

impl<F> Paraphraser for F
where
    F: Fn(&str, &str) -> Result<String, ParaphraseError>,
{
    fn paraphrase(&self, sentence: &str, pinned: &str) -> Result<String, ParaphraseError> {
        self(sentence, pinned)
    }
}

/// Returns the sentence unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityParaphraser;

impl Paraphraser for IdentityParaphraser {
    fn paraphrase(&self, sentence: &str, _pinned: &str) -> Result<String, ParaphraseError> {
        Ok(sentence.to_string())
    }
}

/// Offline stand-in for back-translation: swaps words for synonyms (the
/// `k`-th word takes its `k mod count`-th synonym) and moves the first
/// clause after a ", and" / ", but" boundary to the end.
#[derive(Clone, Debug, Default)]
pub struct StubParaphraser {
    synonyms: BTreeMap<String, Vec<String>>,
}

impl StubParaphraser {
    pub fn new(synonyms: BTreeMap<String, Vec<String>>) -> Self {
        Self { synonyms }
    }

    /// Synonyms of every entry, merged across tags.
    pub fn from_relations(lex: &RelationLexicon) -> Self {
        let mut synonyms: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (word, _, rel) in lex.entries() {
            let list = synonyms.entry(word.to_string()).or_default();
            for s in &rel.synonyms {
                if !list.contains(s) {
                    list.push(s.clone());
                }
            }
        }
        synonyms.retain(|_, v| !v.is_empty());
        Self { synonyms }
    }
}

fn find(hay: &[&str], needle: &[&str]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (0..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()] == *needle)
}

impl Paraphraser for StubParaphraser {
    fn paraphrase(&self, sentence: &str, pinned: &str) -> Result<String, ParaphraseError> {
        let toks: Vec<&str> = sentence.split_whitespace().collect();
        if toks.is_empty() {
            return Err(ParaphraseError("empty sentence".into()));
        }
        let pin: Vec<&str> = pinned.split_whitespace().collect();
        let pinned_at = find(&toks, &pin);
        let mut words: Vec<String> = toks
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let in_pin = pinned_at.is_some_and(|p| (p..p + pin.len()).contains(&k));
                match self.synonyms.get(&w.to_lowercase()) {
                    Some(list) if !in_pin => list[k % list.len()].clone(),
                    _ => w.to_string(),
                }
            })
            .collect();
        let boundary = words
            .windows(2)
            .position(|w| w[0] == "," && (w[1] == "and" || w[1] == "but"));
        if let Some(b) = boundary {
            let end_punct = words.last().is_some_and(|w| w == "." || w == "!");
            let tail_end = if end_punct {
                words.len() - 1
            } else {
                words.len()
            };
            if b + 2 < tail_end {
                let mut first: Vec<String> = words[..b].to_vec();
                let conj = words[b + 1].clone();
                let mut second: Vec<String> = words[b + 2..tail_end].to_vec();
                let punct: Vec<String> = words[tail_end..].to_vec();
                if let Some(w) = first.first_mut() {
                    if w.chars().next().is_some_and(char::is_uppercase) && w != "I" {
                        *w = w.to_lowercase();
                    }
                }
                if let Some(w) = second.first_mut() {
                    let mut c = w.chars();
                    if let Some(h) = c.next() {
                        *w = h.to_uppercase().chain(c).collect();
                    }
                }
                words = second;
                words.push(",".into());
                words.push(conj);
                words.extend(first);
                words.extend(punct);
            }
        }
        Ok(words.join(" "))
    }
}
