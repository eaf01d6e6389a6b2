use std::fmt;
use std::str::FromStr;

use crate::kv::{KvError, KvMap};

use super::{Result, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Cross-entropy only.
    E,
    /// Adversarial min-max over raw/synthetic pairs.
    A,
    /// Cross-entropy plus contrastive.
    EC,
    /// Adversarial plus contrastive.
    AC,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::E, Regime::A, Regime::EC, Regime::AC];

    pub fn adversarial(self) -> bool {
        matches!(self, Regime::A | Regime::AC)
    }

    pub fn contrastive(self) -> bool {
        matches!(self, Regime::EC | Regime::AC)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::E => "e",
            Regime::A => "a",
            Regime::EC => "e+c",
            Regime::AC => "a+c",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s.trim().to_lowercase())
            .ok_or_else(|| {
                TrainError::Config(format!("unknown regime {s:?} (expected e, a, e+c or a+c)"))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub regime: Regime,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// 0 means no limit beyond `max_epochs`.
    pub max_iterations: usize,
    /// Epochs without dev improvement before stopping; 0 disables.
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda_a: f64,
    /// Weights of ita#o, ita#s, itr#o, itr#s.
    pub lambda_c: [f64; 4],
    pub mu: f64,
    pub seed: u64,
    pub share_weights: bool,
    pub disc_hidden: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Also log training-set accuracy after every epoch.
    pub track_train_accuracy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: Regime::E,
            batch_size: 16,
            max_epochs: 30,
            max_iterations: 0,
            patience: 5,
            lr: 1e-4,
            weight_decay: 5e-5,
            lambda_a: 0.6,
            lambda_c: [0.3, 0.2, 0.3, 0.2],
            mu: 0.1,
            seed: 0,
            share_weights: true,
            disc_hidden: 64,
            positives: 2,
            negatives: 4,
            track_train_accuracy: false,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "regime",
        "batch-size",
        "max-epochs",
        "max-iterations",
        "patience",
        "lr",
        "weight-decay",
        "lambda-a",
        "lambda-c1",
        "lambda-c2",
        "lambda-c3",
        "lambda-c4",
        "mu",
        "seed",
        "share-weights",
        "disc-hidden",
        "positives",
        "negatives",
        "track-train-accuracy",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch-size must be positive".into());
        }
        if self.mu <= 0.0 || !self.mu.is_finite() {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if self.lambda_a < 0.0 || self.lambda_c.iter().any(|&l| l < 0.0) {
            return bad("lambda values must be non-negative".into());
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.weight_decay < 0.0 {
            return bad("lr must be positive and weight-decay non-negative".into());
        }
        if self.disc_hidden == 0 || self.positives == 0 || self.negatives == 0 {
            return bad("disc-hidden, positives and negatives must be positive".into());
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &KvMap) -> std::result::Result<(), KvError> {
        if let Some(r) = kv.get_str("regime") {
            self.regime = r.parse().map_err(|_| KvError::Value {
                key: "regime".into(),
                value: r.into(),
            })?;
        }
        kv.set("batch-size", &mut self.batch_size)?;
        kv.set("max-epochs", &mut self.max_epochs)?;
        kv.set("max-iterations", &mut self.max_iterations)?;
        kv.set("patience", &mut self.patience)?;
        kv.set("lr", &mut self.lr)?;
        kv.set("weight-decay", &mut self.weight_decay)?;
        kv.set("lambda-a", &mut self.lambda_a)?;
        for (k, l) in self.lambda_c.iter_mut().enumerate() {
            kv.set(&format!("lambda-c{}", k + 1), l)?;
        }
        kv.set("mu", &mut self.mu)?;
        kv.set("seed", &mut self.seed)?;
        kv.set("share-weights", &mut self.share_weights)?;
        kv.set("disc-hidden", &mut self.disc_hidden)?;
        kv.set("positives", &mut self.positives)?;
        kv.set("negatives", &mut self.negatives)?;
        kv.set("track-train-accuracy", &mut self.track_train_accuracy)?;
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.insert("regime", self.regime);
        kv.insert("batch-size", self.batch_size);
        kv.insert("max-epochs", self.max_epochs);
        kv.insert("max-iterations", self.max_iterations);
        kv.insert("patience", self.patience);
        kv.insert("lr", self.lr);
        kv.insert("weight-decay", self.weight_decay);
        kv.insert("lambda-a", self.lambda_a);
        for (k, l) in self.lambda_c.iter().enumerate() {
            kv.insert(&format!("lambda-c{}", k + 1), l);
        }
        kv.insert("mu", self.mu);
        kv.insert("seed", self.seed);
        kv.insert("share-weights", self.share_weights);
        kv.insert("disc-hidden", self.disc_hidden);
        kv.insert("positives", self.positives);
        kv.insert("negatives", self.negatives);
        kv.insert("track-train-accuracy", self.track_train_accuracy);
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.lambda_a, 0.6);
        assert_eq!(c.lambda_c, [0.3, 0.2, 0.3, 0.2]);
        assert!(c.share_weights);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut c = TrainConfig {
            regime: Regime::AC,
            mu: 0.5,
            ..TrainConfig::default()
        };
        c.lambda_c[2] = 0.0;
        let mut back = TrainConfig::default();
        back.apply_kv(&KvMap::parse(&c.to_kv().to_text()).unwrap())
            .unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn regime_names() {
        for r in Regime::ALL {
            assert_eq!(r.as_str().parse::<Regime>().unwrap(), r);
        }
        assert!("x".parse::<Regime>().is_err());
        assert!(Regime::AC.adversarial() && Regime::AC.contrastive());
        assert!(!Regime::E.adversarial() && !Regime::E.contrastive());
    }

    #[test]
    fn invalid_values() {
        let c = TrainConfig {
            mu: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            lambda_a: -1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
