//! The syntax-aware classifier: transformer encoder over `[CLS] sentence
//! [SEP] aspect [SEP]`, relation-aware graph attention over the dependency
//! parse, aspect-aware pooling and a linear head.

mod config;
mod graph;
mod network;
mod vocab;

pub use config::ModelConfig;
pub use graph::{label_table_size, relation_id, SyntaxGraph, NONE_LABEL, SELF_LABEL};
pub use network::{
    aggregate, classify, usgcn_layer, Aggregated, Encoded, EncoderLayerParams, ForwardVars,
    GcnLayerParams, GcnLayerVars, HeadVars, Network, UsgcnOut, ASPECT_SEGMENT, SENTENCE_SEGMENT,
};
pub use vocab::{Vocab, CLS, SEP, UNK};

use std::fs;
use std::path::Path;

use rabsa_autodiff::{checkpoint, AutodiffError, ParamStore, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augment::WordVectors;
use crate::corpus::{AbsaInstance, CorpusError, LabelInventory, Polarity};
use crate::kv::{KvError, KvMap};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("dependency label {0:?} not in the label inventory")]
    UnknownLabel(String),
    #[error("instance {0}: empty aspect")]
    EmptyAspect(String),
    #[error("instance {id}: input length {len} exceeds max_len {max}")]
    TooLong { id: String, len: usize, max: usize },
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Name prefix of the second classifier used when raw and synthetic data do
/// not share weights.
pub const SECONDARY_PREFIX: &str = "syn.";

const PARAMS_FILE: &str = "model.bin";
const CONFIG_FILE: &str = "config.txt";
const VOCAB_FILE: &str = "vocab.txt";
const LABELS_FILE: &str = "labels.txt";

/// Inference output for one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Probabilities in `Polarity::ALL` order.
    pub probs: [f64; 3],
    pub label: Polarity,
    /// Aggregation weight of every sentence token.
    pub beta: Vec<f64>,
    pub r_f: Vec<f64>,
    pub r_a: Vec<f64>,
    pub r_cls: Vec<f64>,
    pub r_s: Vec<f64>,
    pub r_adv: Vec<f64>,
}

/// First maximum wins, so ties resolve in `Polarity::ALL` order.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub labels: LabelInventory,
    pub store: ParamStore,
    pub primary: Network,
    pub secondary: Option<Network>,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocab, labels: LabelInventory) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let primary = Network::register(
            &mut store,
            "",
            &config,
            vocab.len(),
            label_table_size(&labels),
            &mut rng,
        )?;
        Ok(Self {
            config,
            vocab,
            labels,
            store,
            primary,
            secondary: None,
        })
    }

    /// Add a second, independently initialized classifier.
    pub fn add_secondary(&mut self) -> Result<&Network> {
        if self.secondary.is_none() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.init_seed ^ 0x5eed_5eed);
            let net = Network::register(
                &mut self.store,
                SECONDARY_PREFIX,
                &self.config,
                self.vocab.len(),
                label_table_size(&self.labels),
                &mut rng,
            )?;
            self.secondary = Some(net);
        }
        Ok(self.secondary.as_ref().expect("just set"))
    }

    /// Vocabulary ids, segments and syntax graph of one instance.
    pub fn encode(&self, inst: &AbsaInstance) -> Result<Encoded> {
        let n = inst.tree.len();
        let m = inst.aspect.len();
        if m == 0 {
            return Err(ModelError::EmptyAspect(inst.id.clone()));
        }
        let len = n + m + 3;
        if len > self.config.max_len {
            return Err(ModelError::TooLong {
                id: inst.id.clone(),
                len,
                max: self.config.max_len,
            });
        }
        let mut ids = Vec::with_capacity(len);
        let mut segments = Vec::with_capacity(len);
        ids.push(self.vocab.cls());
        ids.extend(inst.tree.tokens().iter().map(|t| self.vocab.id(&t.form)));
        ids.push(self.vocab.sep());
        segments.resize(n + 2, SENTENCE_SEGMENT);
        ids.extend(inst.aspect_forms().iter().map(|f| self.vocab.id(f)));
        ids.push(self.vocab.sep());
        segments.resize(len, ASPECT_SEGMENT);
        let graph = SyntaxGraph::from_tree(&inst.tree, &self.labels)?;
        Ok(Encoded {
            ids,
            segments,
            n,
            m,
            graph,
        })
    }

    pub fn predict(&self, inst: &AbsaInstance) -> Result<Prediction> {
        self.predict_encoded(&self.encode(inst)?)
    }

    pub fn predict_encoded(&self, input: &Encoded) -> Result<Prediction> {
        let mut tape = Tape::new();
        let f = self
            .primary
            .forward(&mut tape, &self.store, &self.config, input, false)?;
        let row = |v| tape.value(v).data().to_vec();
        let probs = softmax(tape.value(f.logits).data());
        Ok(Prediction {
            probs: [probs[0], probs[1], probs[2]],
            label: Polarity::from_index(argmax(&probs)),
            beta: row(f.beta),
            r_f: row(f.r_f),
            r_a: row(f.r_a),
            r_cls: row(f.r_cls),
            r_s: row(f.r_s),
            r_adv: row(f.r_adv),
        })
    }

    /// Copy pretrained vectors into the word embedding tables; returns how
    /// many vocabulary entries were found.
    pub fn load_word_vectors(&mut self, vectors: &WordVectors) -> Result<usize> {
        if vectors.dim() != self.config.d_model {
            return Err(ModelError::Config(format!(
                "word vectors have dimension {}, model expects {}",
                vectors.dim(),
                self.config.d_model
            )));
        }
        let d = self.config.d_model;
        let mut tables = vec![self.primary.word_emb];
        tables.extend(self.secondary.as_ref().map(|s| s.word_emb));
        let mut found = 0;
        for (k, tok) in self.vocab.tokens().iter().enumerate() {
            if let Some(v) = vectors.get(tok) {
                found += 1;
                for &t in &tables {
                    self.store.get_mut(t).data_mut()[k * d..(k + 1) * d].copy_from_slice(v);
                }
            }
        }
        Ok(found)
    }

    /// Write parameters, configuration, vocabulary and label inventory.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        checkpoint::save(&self.store, &dir.join(PARAMS_FILE))?;
        fs::write(dir.join(CONFIG_FILE), self.config.to_kv().to_text())?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        let mut labels = self.labels.labels().join("\n");
        labels.push('\n');
        fs::write(dir.join(LABELS_FILE), labels)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KvMap::parse(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let config = ModelConfig::from_kv(&kv)?;
        config.validate()?;
        let vocab = Vocab::load(&dir.join(VOCAB_FILE))?;
        let labels = LabelInventory::load(&dir.join(LABELS_FILE))?;
        let store = checkpoint::load(&dir.join(PARAMS_FILE))?;
        let primary = Network::from_store(&store, "", &config)?;
        let secondary = if store.id(&format!("{SECONDARY_PREFIX}cls.w")).is_ok() {
            Some(Network::from_store(&store, SECONDARY_PREFIX, &config)?)
        } else {
            None
        };
        Ok(Self {
            config,
            vocab,
            labels,
            store,
            primary,
            secondary,
        })
    }
}
