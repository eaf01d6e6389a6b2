//! One function per subcommand. Each reads its inputs from a [`RunConfig`]
//! and writes its artifacts under `config.out`.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rabsa_autodiff::suite::op_suite;
use rabsa_core::augment::{
    augment_corpus, load_samples, write_samples, AugmentSummary, IdentityParaphraser, Lexicons,
    Paraphraser, StubParaphraser, SyntheticKind, SyntheticSample, WordVectors,
};
use rabsa_core::corpus::{load_conllu, load_instances, AbsaInstance, LabelInventory};
use rabsa_core::eval::{dump_representations, evaluate, EvalReport};
use rabsa_core::lexicon::{NegationList, RelationLexicon, SentimentLexicon};
use rabsa_core::model::{Model, Vocab};
use rabsa_core::toy::ToyCorpus;
use rabsa_core::training::{check_regime, train, Corpora, Regime, TrainError, TrainSummary};
use serde::Serialize;

use crate::config::{ParaphraserChoice, RunConfig};
use crate::error::{CliError, Result};

/// File stem of each synthetic corpus inside a synthetic directory.
pub const KIND_FILES: [(SyntheticKind, &str); 3] = [
    (SyntheticKind::SentimentMod, "sentiment_mod"),
    (SyntheticKind::BackgroundRewrite, "background"),
    (SyntheticKind::AspectAddition, "aspect_addition"),
];

pub const REPARSE_LIST: &str = "needs_reparse.tsv";
pub const MODEL_DIR: &str = "model";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const NON_FINITE_DUMP: &str = "nonfinite.json";

/// Per-op tolerance of the finite-difference suite.
pub const OP_TOL: f64 = 1e-4;
/// Tolerance for gradients of the full training objective.
pub const MODEL_TOL: f64 = 1e-3;

fn input_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Input {
        path: path.display().to_string(),
        source,
    }
}

fn require_file(path: &Path) -> Result<()> {
    fs::metadata(path).map(|_| ()).map_err(input_err(path))
}

fn load_split(records: &Path, parses: &Path) -> Result<Vec<AbsaInstance>> {
    require_file(records)?;
    require_file(parses)?;
    let trees = load_conllu(parses)?;
    Ok(load_instances(records, &trees)?)
}

fn toy(cfg: &RunConfig) -> Result<Option<ToyCorpus>> {
    if cfg.toy {
        Ok(Some(ToyCorpus::load()?))
    } else {
        Ok(None)
    }
}

/// The training (or evaluation) corpus.
pub fn main_corpus(cfg: &RunConfig) -> Result<Vec<AbsaInstance>> {
    match (&cfg.corpus, &cfg.parses) {
        (Some(c), Some(p)) => load_split(c, p),
        (None, None) => match toy(cfg)? {
            Some(t) => Ok(t.train),
            None => Err(CliError::Usage(
                "set `corpus` and `parses`, or `toy`".into(),
            )),
        },
        _ => Err(CliError::Usage(
            "`corpus` and `parses` must be given together".into(),
        )),
    }
}

/// The dev corpus, empty when none is configured.
pub fn dev_corpus(cfg: &RunConfig) -> Result<Vec<AbsaInstance>> {
    match (&cfg.dev_corpus, &cfg.dev_parses) {
        (Some(c), Some(p)) => load_split(c, p),
        (None, None) if cfg.corpus.is_none() => Ok(toy(cfg)?.map(|t| t.dev).unwrap_or_default()),
        (None, None) => Ok(Vec::new()),
        _ => Err(CliError::Usage(
            "`dev-corpus` and `dev-parses` must be given together".into(),
        )),
    }
}

/// `sentiment.tsv`, `relations.tsv` and `negations.txt` from the lexicon
/// directory.
pub fn lexicons(cfg: &RunConfig) -> Result<Lexicons> {
    let Some(dir) = &cfg.lexicons else {
        return match toy(cfg)? {
            Some(t) => Ok(t.lexicons),
            None => Err(CliError::Usage("set `lexicons` (or `toy`)".into())),
        };
    };
    let file = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        require_file(&p)?;
        Ok(p)
    };
    Ok(Lexicons {
        sentiment: SentimentLexicon::load(&file("sentiment.tsv")?)?,
        relations: RelationLexicon::load(&file("relations.tsv")?)?,
        negations: NegationList::load(&file("negations.txt")?)?,
    })
}

pub fn labels(cfg: &RunConfig) -> Result<LabelInventory> {
    match &cfg.labels {
        Some(p) => {
            require_file(p)?;
            Ok(LabelInventory::load(p)?)
        }
        None => Ok(toy(cfg)?.map_or_else(LabelInventory::universal, |t| t.labels)),
    }
}

pub fn vectors(cfg: &RunConfig) -> Result<WordVectors> {
    match &cfg.vectors {
        Some(p) => {
            require_file(p)?;
            Ok(WordVectors::load(p)?)
        }
        None => match toy(cfg)? {
            Some(t) => Ok(t.vectors),
            None => Err(CliError::Usage("set `vectors` (or `toy`)".into())),
        },
    }
}

/// All samples of a synthetic directory, in canonical order.
pub fn load_synthetic(dir: &Path) -> Result<Vec<SyntheticSample>> {
    let mut all = Vec::new();
    for (_, stem) in KIND_FILES {
        let records = dir.join(format!("{stem}.jsonl"));
        let parses = dir.join(format!("{stem}.conllu"));
        require_file(&records)?;
        require_file(&parses)?;
        all.extend(load_samples(&records, &parses)?);
    }
    all.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(all)
}

fn write_synthetic(dir: &Path, samples: &[SyntheticSample]) -> Result<()> {
    for (kind, stem) in KIND_FILES {
        let of_kind: Vec<SyntheticSample> =
            samples.iter().filter(|s| s.kind == kind).cloned().collect();
        write_samples(
            &of_kind,
            &dir.join(format!("{stem}.jsonl")),
            &dir.join(format!("{stem}.conllu")),
        )?;
    }
    Ok(())
}

fn sentence_list<'a>(samples: impl Iterator<Item = &'a SyntheticSample>) -> String {
    samples
        .map(|s| format!("{}\t{}\n", s.id(), s.instance.tree.text()))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// The resolved settings, minus the output directory so that identical
/// runs into different directories write identical files.
fn write_run_config(cfg: &RunConfig) -> Result<()> {
    let text: String = cfg
        .to_kv()
        .to_text()
        .lines()
        .filter(|l| !l.starts_with("out ="))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(cfg.out.join("run.txt"), text)?;
    Ok(())
}

/// Generate the three synthetic corpora from the main corpus.
pub fn cmd_augment(cfg: &RunConfig) -> Result<AugmentSummary> {
    let raw = main_corpus(cfg)?;
    let lex = lexicons(cfg)?;
    let vecs = vectors(cfg)?;
    let mut acfg = cfg.augment.clone();
    let stub;
    let paraphraser: &dyn Paraphraser = match cfg.paraphraser {
        ParaphraserChoice::Stub => {
            stub = StubParaphraser::from_relations(&lex.relations);
            &stub
        }
        ParaphraserChoice::Identity => &IdentityParaphraser,
        ParaphraserChoice::None => {
            acfg.background.paraphrase = false;
            &IdentityParaphraser
        }
    };
    fs::create_dir_all(&cfg.out)?;
    let out = augment_corpus(&raw, &lex, &acfg, paraphraser, &vecs);
    let all = out.all();
    write_synthetic(&cfg.out, &all)?;
    fs::write(
        cfg.out.join(REPARSE_LIST),
        sentence_list(all.iter().filter(|s| s.needs_reparse)),
    )?;
    write_json(&cfg.out.join("augment_summary.json"), &out.summary)?;
    write_run_config(cfg)?;
    if all.is_empty() {
        warn!("no synthetic samples passed their thresholds");
    }
    info!(
        "emitted {} / {} / {} samples",
        out.sentiment_mod.len(),
        out.background.len(),
        out.aspect_addition.len()
    );
    Ok(out.summary)
}

/// Train a classifier; the model goes to `out/model`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let mut raw = main_corpus(cfg)?;
    let dev = dev_corpus(cfg)?;
    let synthetic = match &cfg.synthetic {
        Some(dir) => load_synthetic(dir)?,
        None => Vec::new(),
    };
    if cfg.train.regime == Regime::E && cfg.merge_synthetic {
        raw.extend(synthetic.iter().map(|s| s.instance.clone()));
    }
    let syn_instances: Vec<AbsaInstance> = synthetic.iter().map(|s| s.instance.clone()).collect();
    let vocab = Vocab::from_corpora(&[&raw, &dev, &syn_instances]);
    let mut model = Model::new(cfg.model.clone(), vocab, labels(cfg)?)?;
    if let Some(p) = &cfg.pretrained {
        require_file(p)?;
        let found = model.load_word_vectors(&WordVectors::load(p)?)?;
        info!("initialized {found} word embeddings from {}", p.display());
    }
    fs::create_dir_all(&cfg.out)?;
    write_run_config(cfg)?;
    let mut log = std::io::BufWriter::new(fs::File::create(cfg.out.join(TRAIN_LOG))?);
    let corpora = Corpora {
        raw: &raw,
        synthetic: &synthetic,
        dev: &dev,
    };
    let summary = match train(&mut model, &cfg.train, corpora, &mut log) {
        Err(TrainError::NonFinite(dump)) => {
            write_json(&cfg.out.join(NON_FINITE_DUMP), &dump)?;
            return Err(TrainError::NonFinite(dump).into());
        }
        other => other?,
    };
    std::io::Write::flush(&mut log)?;
    model.save(&cfg.out.join(MODEL_DIR))?;
    write_json(&cfg.out.join("train_summary.json"), &summary)?;
    Ok(summary)
}

fn model_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg
        .model_dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("set `model` to a trained model directory".into()))?;
    require_file(&dir.join("config.txt"))?;
    Ok(dir)
}

/// The corpus to evaluate: an explicit one, else the dev split of the toy
/// data.
fn eval_corpus(cfg: &RunConfig) -> Result<Vec<AbsaInstance>> {
    if cfg.corpus.is_none() && cfg.toy {
        return Ok(ToyCorpus::load()?.dev);
    }
    main_corpus(cfg)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let model = Model::load(model_dir(cfg)?)?;
    let corpus = eval_corpus(cfg)?;
    let report = evaluate(&model, &corpus)?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("eval.txt"), report.to_text())?;
    fs::write(cfg.out.join("eval.json"), report.to_json() + "\n")?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub scope: String,
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// The first `n` main-corpus instances with at least two kinds of synthetic
/// samples, and those samples.
fn gradcheck_slice(
    raw: &[AbsaInstance],
    synthetic: &[SyntheticSample],
    n: usize,
) -> (Vec<AbsaInstance>, Vec<SyntheticSample>) {
    let picked: Vec<AbsaInstance> = raw
        .iter()
        .filter(|r| {
            let mut kinds: Vec<SyntheticKind> = synthetic
                .iter()
                .filter(|s| s.source_id == r.id)
                .map(|s| s.kind)
                .collect();
            kinds.dedup();
            kinds.len() >= 2
        })
        .take(n)
        .cloned()
        .collect();
    let samples = synthetic
        .iter()
        .filter(|s| picked.iter().any(|r| r.id == s.source_id))
        .cloned()
        .collect();
    (picked, samples)
}

/// Finite-difference checks of every tape op, then of every parameter
/// group under each training regime. Fails when any row exceeds its
/// tolerance.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<Vec<CheckRow>> {
    let mut rows: Vec<CheckRow> = op_suite(cfg.gradcheck_seeds)?
        .into_iter()
        .map(|r| CheckRow {
            scope: "op".into(),
            name: r.op.into(),
            checked: r.coordinates,
            max_rel_error: r.max_rel_error,
            tolerance: OP_TOL,
        })
        .collect();

    let raw = main_corpus(cfg)?;
    let lex = lexicons(cfg)?;
    let vecs = vectors(cfg)?;
    let out = augment_corpus(
        &raw,
        &lex,
        &cfg.augment,
        &StubParaphraser::from_relations(&lex.relations),
        &vecs,
    );
    let (slice, synthetic) = gradcheck_slice(&raw, &out.all(), 4);
    if slice.is_empty() {
        return Err(CliError::Usage(
            "no instance has synthetic samples to check against".into(),
        ));
    }
    let syn_instances: Vec<AbsaInstance> = synthetic.iter().map(|s| s.instance.clone()).collect();
    let vocab = Vocab::from_corpora(&[&slice, &syn_instances]);
    for regime in Regime::ALL {
        let mut model = Model::new(cfg.model.clone(), vocab.clone(), labels(cfg)?)?;
        let tcfg = rabsa_core::training::TrainConfig {
            regime,
            ..cfg.train.clone()
        };
        let corpora = Corpora {
            raw: &slice,
            synthetic: &synthetic,
            dev: &[],
        };
        for g in check_regime(
            &mut model,
            &tcfg,
            corpora,
            cfg.gradcheck_per_param,
            cfg.seed,
        )? {
            rows.push(CheckRow {
                scope: regime.as_str().into(),
                name: g.group,
                checked: g.checked,
                max_rel_error: g.max_rel_error,
                tolerance: MODEL_TOL,
            });
        }
    }

    fs::create_dir_all(&cfg.out)?;
    let mut table = String::from("scope\tname\tchecked\tmax_rel_error\ttolerance\tstatus\n");
    for r in &rows {
        table.push_str(&format!(
            "{}\t{}\t{}\t{:.3e}\t{:e}\t{}\n",
            r.scope,
            r.name,
            r.checked,
            r.max_rel_error,
            r.tolerance,
            if r.passed() { "ok" } else { "FAIL" }
        ));
    }
    fs::write(cfg.out.join("gradcheck.tsv"), &table)?;
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{}/{}", r.scope, r.name))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::GradCheck(failed.join(", ")));
    }
    Ok(rows)
}

fn synthetic_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.synthetic
        .as_deref()
        .ok_or_else(|| CliError::Usage("set `synthetic` to an augment output directory".into()))
}

/// Write `id<TAB>sentence` for samples awaiting a parse (or all samples with
/// `all-sentences`). Returns the number of lines.
pub fn cmd_export_sentences(cfg: &RunConfig) -> Result<usize> {
    let samples = load_synthetic(synthetic_dir(cfg)?)?;
    let picked: Vec<&SyntheticSample> = samples
        .iter()
        .filter(|s| cfg.all_sentences || s.needs_reparse)
        .collect();
    fs::create_dir_all(&cfg.out)?;
    fs::write(
        cfg.out.join("sentences.tsv"),
        sentence_list(picked.iter().copied()),
    )?;
    Ok(picked.len())
}

/// Replace provisional parses with the trees of `reparsed`. Trees carrying
/// a `sent_id` comment are matched by id, the rest by position among the
/// exported sentences. Token forms must agree exactly. Writes the updated
/// synthetic corpora to `out`; returns how many trees were replaced.
pub fn cmd_import_parses(cfg: &RunConfig) -> Result<usize> {
    let mut samples = load_synthetic(synthetic_dir(cfg)?)?;
    let path = cfg
        .reparsed
        .as_deref()
        .ok_or_else(|| CliError::Usage("set `reparsed` to a CoNLL-U file".into()))?;
    require_file(path)?;
    let trees = load_conllu(path)?;
    let targets: Vec<usize> = (0..samples.len())
        .filter(|&k| cfg.all_sentences || samples[k].needs_reparse)
        .collect();
    let mut replaced = 0;
    for (pos, tree) in trees.into_iter().enumerate() {
        let k = match tree.sent_id() {
            Some(id) => samples.iter().position(|s| s.id() == id).ok_or_else(|| {
                CliError::Usage(format!("reparsed sentence {id:?} matches no sample"))
            })?,
            None => *targets.get(pos).ok_or_else(|| {
                CliError::Usage(format!(
                    "{} more trees than exported sentences",
                    pos + 1 - targets.len()
                ))
            })?,
        };
        let s = &mut samples[k];
        if tree.forms() != s.instance.tree.forms() {
            return Err(CliError::Usage(format!(
                "tokens of the reparse of {} differ from the sample",
                s.id()
            )));
        }
        s.instance.tree = tree;
        s.needs_reparse = false;
        replaced += 1;
    }
    fs::create_dir_all(&cfg.out)?;
    write_synthetic(&cfg.out, &samples)?;
    fs::write(
        cfg.out.join(REPARSE_LIST),
        sentence_list(samples.iter().filter(|s| s.needs_reparse)),
    )?;
    Ok(replaced)
}

/// Write one representation of every instance to `out/<name>.tsv`.
pub fn cmd_dump_reprs(cfg: &RunConfig) -> Result<PathBuf> {
    let model = Model::load(model_dir(cfg)?)?;
    let corpus = eval_corpus(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("{}.tsv", cfg.representation.as_str()));
    let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
    dump_representations(&model, &corpus, cfg.representation, &mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(path)
}
