use crate::kv::{KvError, KvMap};

use super::{ModelError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub d_gcn: usize,
    /// Number of syntax-fusion layers; 0 skips them entirely.
    pub n_gcn_layers: usize,
    pub d_label: usize,
    /// Longest input sequence (sentence + aspect + 3 specials).
    pub max_len: usize,
    pub word_dropout: f64,
    pub feature_dropout: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            d_gcn: 32,
            n_gcn_layers: 3,
            d_label: 16,
            max_len: 128,
            word_dropout: 0.3,
            feature_dropout: 0.1,
            init_seed: 0,
        }
    }

    pub fn full() -> Self {
        Self {
            d_model: 768,
            n_layers: 4,
            n_heads: 12,
            d_ff: 3072,
            d_gcn: 300,
            n_gcn_layers: 3,
            d_label: 100,
            max_len: 256,
            ..Self::desk()
        }
    }

    /// Width of the syntax representation: the fusion layers' output, or the
    /// encoder's when there are none.
    pub fn d_syntax(&self) -> usize {
        if self.n_gcn_layers == 0 {
            self.d_model
        } else {
            self.d_gcn
        }
    }

    /// Length of `r_f = [r_a; h_cls]`.
    pub fn d_feature(&self) -> usize {
        self.d_syntax() + self.d_model
    }

    /// Length of `r_adv = [r_cls; r_a; r_s]`.
    pub fn d_adv(&self) -> usize {
        self.d_model + 2 * self.d_syntax()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff == 0 || self.d_label == 0 || self.max_len < 4 {
            return bad("d_ff, d_label must be positive and max_len at least 4".into());
        }
        if self.n_gcn_layers > 0 && self.d_gcn == 0 {
            return bad("d_gcn must be positive".into());
        }
        for p in [self.word_dropout, self.feature_dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout {p} outside [0, 1)"));
            }
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "preset",
        "d-model",
        "n-layers",
        "n-heads",
        "d-ff",
        "d-gcn",
        "n-gcn-layers",
        "d-label",
        "max-len",
        "word-dropout",
        "feature-dropout",
        "init-seed",
    ];

    /// Apply any model keys present in `kv` (a `preset` of `desk` or `full`
    /// is applied first).
    pub fn apply_kv(&mut self, kv: &KvMap) -> std::result::Result<(), KvError> {
        match kv.get_str("preset") {
            Some("full") => *self = Self::full(),
            Some("desk") => *self = Self::desk(),
            Some(other) => {
                return Err(KvError::Value {
                    key: "preset".into(),
                    value: other.into(),
                })
            }
            None => {}
        }
        kv.set("d-model", &mut self.d_model)?;
        kv.set("n-layers", &mut self.n_layers)?;
        kv.set("n-heads", &mut self.n_heads)?;
        kv.set("d-ff", &mut self.d_ff)?;
        kv.set("d-gcn", &mut self.d_gcn)?;
        kv.set("n-gcn-layers", &mut self.n_gcn_layers)?;
        kv.set("d-label", &mut self.d_label)?;
        kv.set("max-len", &mut self.max_len)?;
        kv.set("word-dropout", &mut self.word_dropout)?;
        kv.set("feature-dropout", &mut self.feature_dropout)?;
        kv.set("init-seed", &mut self.init_seed)?;
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.insert("d-model", self.d_model);
        kv.insert("n-layers", self.n_layers);
        kv.insert("n-heads", self.n_heads);
        kv.insert("d-ff", self.d_ff);
        kv.insert("d-gcn", self.d_gcn);
        kv.insert("n-gcn-layers", self.n_gcn_layers);
        kv.insert("d-label", self.d_label);
        kv.insert("max-len", self.max_len);
        kv.insert("word-dropout", self.word_dropout);
        kv.insert("feature-dropout", self.feature_dropout);
        kv.insert("init-seed", self.init_seed);
        kv
    }

    pub fn from_kv(kv: &KvMap) -> std::result::Result<Self, KvError> {
        let mut c = Self::desk();
        c.apply_kv(kv)?;
        Ok(c)
    }
}
