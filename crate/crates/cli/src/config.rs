//! Run settings assembled from built-in defaults, an optional `key = value`
//! file and command-line flags, later sources winning.

use std::path::{Path, PathBuf};

use rabsa_core::augment::AugmentConfig;
use rabsa_core::eval::Representation;
use rabsa_core::kv::{KvError, KvMap};
use rabsa_core::model::ModelConfig;
use rabsa_core::training::TrainConfig;

use crate::error::{CliError, Result};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "RABSA_CONFIG";

pub const PATH_KEYS: &[&str] = &[
    "corpus",
    "parses",
    "dev-corpus",
    "dev-parses",
    "lexicons",
    "labels",
    "vectors",
    "pretrained",
    "synthetic",
    "model",
    "reparsed",
    "out",
];

pub const RUN_KEYS: &[&str] = &[
    "toy",
    "paraphraser",
    "merge-synthetic",
    "representation",
    "all-sentences",
    "gradcheck-seeds",
    "gradcheck-per-param",
    "theta-a",
    "theta-n",
    "theta-m",
    "addition-units",
    "per-target",
];

/// Every key accepted in a config file or as a `--key` flag.
pub fn all_keys() -> Vec<&'static str> {
    let mut keys: Vec<&'static str> = PATH_KEYS.iter().chain(RUN_KEYS).copied().collect();
    keys.extend(ModelConfig::KEYS);
    keys.extend(TrainConfig::KEYS);
    keys
}

/// Keys that take no value on the command line.
pub const SWITCH_KEYS: &[&str] = &[
    "toy",
    "merge-synthetic",
    "all-sentences",
    "share-weights",
    "track-train-accuracy",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParaphraserChoice {
    /// Synonym swaps from the relation lexicon.
    Stub,
    Identity,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub parses: Option<PathBuf>,
    pub dev_corpus: Option<PathBuf>,
    pub dev_parses: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub pretrained: Option<PathBuf>,
    pub synthetic: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub reparsed: Option<PathBuf>,
    pub out: PathBuf,
    /// Fill unset corpus and resource paths from the bundled toy data.
    pub toy: bool,
    pub paraphraser: ParaphraserChoice,
    /// Regime `e` only: train on raw and synthetic instances alike.
    pub merge_synthetic: bool,
    pub representation: Representation,
    pub all_sentences: bool,
    pub gradcheck_seeds: u64,
    pub gradcheck_per_param: usize,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            parses: None,
            dev_corpus: None,
            dev_parses: None,
            lexicons: None,
            labels: None,
            vectors: None,
            pretrained: None,
            synthetic: None,
            model_dir: None,
            reparsed: None,
            out: PathBuf::from("out"),
            toy: false,
            paraphraser: ParaphraserChoice::Stub,
            merge_synthetic: false,
            representation: Representation::RF,
            all_sentences: false,
            gradcheck_seeds: 100,
            gradcheck_per_param: 3,
            augment: AugmentConfig::default(),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

fn value_err(key: &str, value: &str) -> KvError {
    KvError::Value {
        key: key.into(),
        value: value.into(),
    }
}

/// `later` overrides `earlier` key by key.
pub fn merge(earlier: &KvMap, later: &KvMap) -> KvMap {
    let mut out = earlier.clone();
    for k in later.keys() {
        out.insert(k, later.get_str(k).unwrap_or_default());
    }
    out
}

impl RunConfig {
    /// Defaults overridden by `file` and then by `flags`.
    pub fn resolve(file: Option<&KvMap>, flags: &KvMap) -> Result<Self> {
        let merged = match file {
            Some(f) => merge(f, flags),
            None => flags.clone(),
        };
        Self::from_kv(&merged)
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        kv.check_known(&all_keys())?;
        let mut c = Self::default();
        let path = |key: &str| kv.get_str(key).map(PathBuf::from);
        c.corpus = path("corpus");
        c.parses = path("parses");
        c.dev_corpus = path("dev-corpus");
        c.dev_parses = path("dev-parses");
        c.lexicons = path("lexicons");
        c.labels = path("labels");
        c.vectors = path("vectors");
        c.pretrained = path("pretrained");
        c.synthetic = path("synthetic");
        c.model_dir = path("model");
        c.reparsed = path("reparsed");
        if let Some(p) = path("out") {
            c.out = p;
        }
        kv.set("toy", &mut c.toy)?;
        if let Some(p) = kv.get_str("paraphraser") {
            c.paraphraser = match p.to_lowercase().as_str() {
                "stub" => ParaphraserChoice::Stub,
                "identity" => ParaphraserChoice::Identity,
                "none" => ParaphraserChoice::None,
                _ => return Err(value_err("paraphraser", p).into()),
            };
        }
        kv.set("merge-synthetic", &mut c.merge_synthetic)?;
        if let Some(r) = kv.get_str("representation") {
            c.representation = r.parse().map_err(|_| value_err("representation", r))?;
        }
        kv.set("all-sentences", &mut c.all_sentences)?;
        kv.set("gradcheck-seeds", &mut c.gradcheck_seeds)?;
        kv.set("gradcheck-per-param", &mut c.gradcheck_per_param)?;
        kv.set("theta-a", &mut c.augment.sentiment.theta_a)?;
        kv.set("theta-n", &mut c.augment.background.theta_n)?;
        kv.set("theta-m", &mut c.augment.addition.theta_m)?;
        kv.set("addition-units", &mut c.augment.addition.j)?;
        kv.set("per-target", &mut c.augment.addition.per_target)?;
        if c.augment.addition.j == 0 {
            return Err(CliError::Usage("addition-units must be at least 1".into()));
        }
        c.model.apply_kv(kv)?;
        c.train.apply_kv(kv)?;
        c.seed = c.train.seed;
        if kv.get_str("init-seed").is_none() {
            c.model.init_seed = c.seed;
        }
        c.model
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        c.train
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }

    /// Every setting as `key = value` text, readable by [`RunConfig::from_kv`].
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        let mut put = |k: &str, p: &Option<PathBuf>| {
            if let Some(p) = p {
                kv.insert(k, p.display());
            }
        };
        put("corpus", &self.corpus);
        put("parses", &self.parses);
        put("dev-corpus", &self.dev_corpus);
        put("dev-parses", &self.dev_parses);
        put("lexicons", &self.lexicons);
        put("labels", &self.labels);
        put("vectors", &self.vectors);
        put("pretrained", &self.pretrained);
        put("synthetic", &self.synthetic);
        put("model", &self.model_dir);
        put("reparsed", &self.reparsed);
        kv.insert("out", self.out.display());
        kv.insert("toy", self.toy);
        kv.insert(
            "paraphraser",
            match self.paraphraser {
                ParaphraserChoice::Stub => "stub",
                ParaphraserChoice::Identity => "identity",
                ParaphraserChoice::None => "none",
            },
        );
        kv.insert("merge-synthetic", self.merge_synthetic);
        kv.insert("representation", self.representation.as_str());
        kv.insert("all-sentences", self.all_sentences);
        kv.insert("gradcheck-seeds", self.gradcheck_seeds);
        kv.insert("gradcheck-per-param", self.gradcheck_per_param);
        kv.insert("theta-a", self.augment.sentiment.theta_a);
        kv.insert("theta-n", self.augment.background.theta_n);
        kv.insert("theta-m", self.augment.addition.theta_m);
        kv.insert("addition-units", self.augment.addition.j);
        kv.insert("per-target", self.augment.addition.per_target);
        let mut kv = merge(&kv, &self.model.to_kv());
        kv = merge(&kv, &self.train.to_kv());
        kv
    }
}

/// The config file to read: an explicit path, else the environment
/// variable, else none.
pub fn config_path(explicit: Option<&Path>, env: Option<&str>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| env.filter(|v| !v.trim().is_empty()).map(PathBuf::from))
}

pub fn read_config_file(path: &Path) -> Result<KvMap> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.display().to_string(),
        source,
    })?;
    Ok(KvMap::parse(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(text: &str) -> KvMap {
        KvMap::parse(text).unwrap()
    }

    #[test]
    fn precedence_matrix() {
        // (file value, flag value, expected) for one key of each section.
        let cases: &[(&str, Option<&str>, Option<&str>, &str)] = &[
            ("lr", None, None, "0.0001"),
            ("lr", Some("0.01"), None, "0.01"),
            ("lr", None, Some("0.02"), "0.02"),
            ("lr", Some("0.01"), Some("0.02"), "0.02"),
            ("d-model", None, None, "64"),
            ("d-model", Some("32"), None, "32"),
            ("d-model", None, Some("16"), "16"),
            ("d-model", Some("32"), Some("16"), "16"),
            ("theta-a", None, None, "0.2"),
            ("theta-a", Some("0.5"), None, "0.5"),
            ("theta-a", None, Some("0.7"), "0.7"),
            ("theta-a", Some("0.5"), Some("0.7"), "0.7"),
            ("out", None, None, "out"),
            ("out", Some("a"), None, "a"),
            ("out", None, Some("b"), "b"),
            ("out", Some("a"), Some("b"), "b"),
        ];
        for &(key, file, flag, want) in cases {
            let f = file.map(|v| kv(&format!("{key} = {v}")));
            let g = flag.map_or_else(KvMap::default, |v| kv(&format!("{key} = {v}")));
            let c = RunConfig::resolve(f.as_ref(), &g).unwrap();
            assert_eq!(
                c.to_kv().get_str(key),
                Some(want),
                "{key} file={file:?} flag={flag:?}"
            );
        }
    }

    #[test]
    fn seed_drives_initialization_unless_set() {
        let c = RunConfig::from_kv(&kv("seed = 9")).unwrap();
        assert_eq!((c.train.seed, c.model.init_seed), (9, 9));
        let c = RunConfig::from_kv(&kv("seed = 9\ninit-seed = 4")).unwrap();
        assert_eq!((c.train.seed, c.model.init_seed), (9, 4));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(
            RunConfig::from_kv(&kv("bogus = 1")),
            Err(CliError::Kv(KvError::UnknownKey(_)))
        ));
        assert!(RunConfig::from_kv(&kv("lr = fast")).is_err());
        assert!(RunConfig::from_kv(&kv("paraphraser = gpt")).is_err());
        assert_eq!(
            RunConfig::from_kv(&kv("batch-size = 0"))
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn written_config_reads_back() {
        let c = RunConfig::from_kv(&kv(
            "regime = a+c\nd-model = 32\ntheta-m = 0.9\ntoy = true\nmodel = m",
        ))
        .unwrap();
        assert_eq!(RunConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn config_path_falls_back_to_the_environment() {
        assert_eq!(
            config_path(Some(Path::new("a")), Some("b")),
            Some(PathBuf::from("a"))
        );
        assert_eq!(config_path(None, Some("b")), Some(PathBuf::from("b")));
        assert_eq!(config_path(None, Some(" ")), None);
        assert_eq!(config_path(None, None), None);
    }
}
