//! The bundled toy corpus and a synthetic separable set, so every pipeline
//! runs offline.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{AugmentError, Lexicons, StubParaphraser, WordVectors};
use crate::corpus::{
    parse_conllu, parse_instances, AbsaInstance, AspectSpan, DepTree, LabelInventory, Polarity,
    Token,
};
use crate::lexicon::{NegationList, RelationLexicon, SentimentLexicon};

/// `(file name, contents)` of every bundled file.
pub const FILES: &[(&str, &str)] = &[
    ("train.conllu", include_str!("../data/toy/train.conllu")),
    ("train.jsonl", include_str!("../data/toy/train.jsonl")),
    ("dev.conllu", include_str!("../data/toy/dev.conllu")),
    ("dev.jsonl", include_str!("../data/toy/dev.jsonl")),
    ("sentiment.tsv", include_str!("../data/toy/sentiment.tsv")),
    ("relations.tsv", include_str!("../data/toy/relations.tsv")),
    ("negations.txt", include_str!("../data/toy/negations.txt")),
    ("labels.txt", include_str!("../data/toy/labels.txt")),
    ("vectors.txt", include_str!("../data/toy/vectors.txt")),
];

fn file(name: &str) -> &'static str {
    FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| *c)
        .expect("bundled file exists")
}

/// The bundled corpus with its resources.
#[derive(Clone, Debug)]
pub struct ToyCorpus {
    pub train: Vec<AbsaInstance>,
    pub dev: Vec<AbsaInstance>,
    pub lexicons: Lexicons,
    pub labels: LabelInventory,
    pub vectors: WordVectors,
}

impl ToyCorpus {
    pub fn load() -> Result<Self, AugmentError> {
        let split = |c: &str, j: &str| -> Result<Vec<AbsaInstance>, AugmentError> {
            let trees = parse_conllu(file(c))?;
            Ok(parse_instances(file(j), &trees)?)
        };
        let negations =
            NegationList::new(file("negations.txt").lines().map(str::to_string).collect())?;
        Ok(Self {
            train: split("train.conllu", "train.jsonl")?,
            dev: split("dev.conllu", "dev.jsonl")?,
            lexicons: Lexicons {
                sentiment: SentimentLexicon::parse(file("sentiment.tsv"))?,
                relations: RelationLexicon::parse(file("relations.tsv"))?,
                negations,
            },
            labels: LabelInventory::new(file("labels.txt").lines().filter(|l| !l.is_empty())),
            vectors: WordVectors::parse(file("vectors.txt"))?,
        })
    }

    pub fn paraphraser(&self) -> StubParaphraser {
        StubParaphraser::from_relations(&self.lexicons.relations)
    }
}

/// Copy the bundled files into `dir`.
pub fn write_bundled(dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, contents) in FILES {
        fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

const SUBJECTS: &[&str] = &[
    "food", "pizza", "service", "staff", "room", "wine", "music", "price",
];
const POSITIVE: &[&str] = &["great", "delicious", "lovely", "excellent"];
const NEGATIVE: &[&str] = &["awful", "terrible", "bland", "rude"];
const NEUTRAL: &[&str] = &["average", "ordinary", "standard", "typical"];

/// `n` instances of "the NOUN is ADJ ." whose polarity is fixed by which of
/// three disjoint adjective lists the word comes from.
pub fn separable(n: usize, seed: u64) -> Vec<AbsaInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let label = Polarity::from_index(k % 3);
            let words = match label {
                Polarity::Positive => POSITIVE,
                Polarity::Negative => NEGATIVE,
                Polarity::Neutral => NEUTRAL,
            };
            let noun = *SUBJECTS.choose(&mut rng).expect("non-empty");
            let adj = *words.choose(&mut rng).expect("non-empty");
            let tree = DepTree::from_arcs(
                vec![
                    Token::new(1, "the", "DET"),
                    Token::new(2, noun, "NOUN"),
                    Token::new(3, "is", "AUX"),
                    Token::new(4, adj, "ADJ"),
                    Token::new(5, ".", "PUNCT"),
                ],
                &[
                    (2, 1, "det"),
                    (4, 2, "nsubj"),
                    (4, 3, "cop"),
                    (0, 4, "root"),
                    (4, 5, "punct"),
                ],
            )
            .expect("template tree is valid");
            let mut inst = AbsaInstance::new(
                format!("sep-{k}"),
                tree,
                AspectSpan { start: 2, end: 3 },
                label,
            );
            inst.gold_opinion = Some([4].into());
            inst
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_corpus_loads() {
        let toy = ToyCorpus::load().unwrap();
        assert!(toy.train.len() + toy.dev.len() >= 80);
        for inst in toy.train.iter().chain(&toy.dev) {
            toy.labels.validate(&inst.tree).unwrap();
            assert!(inst.gold_opinion.as_ref().is_some_and(|g| !g.is_empty()));
        }
        assert_eq!(toy.vectors.dim(), 64);
    }

    #[test]
    fn separable_is_balanced_and_deterministic() {
        let a = separable(64, 1);
        assert_eq!(a, separable(64, 1));
        let pos = a.iter().filter(|i| i.label == Polarity::Positive).count();
        assert_eq!(pos, 22);
    }
}
