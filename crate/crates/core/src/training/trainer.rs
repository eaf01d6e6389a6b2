use std::collections::BTreeMap;
use std::io::Write;

use log::{info, warn};
use rabsa_autodiff::{
    Adam, AdamConfig, AutodiffError, DropoutKey, ParamStore, Tape, Var, COSINE_EPS,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augment::{SyntheticKind, SyntheticSample};
use crate::corpus::{AbsaInstance, Polarity};
use crate::model::{argmax, Encoded, ForwardVars, Model, ModelConfig, ModelError, Network};

use super::batch::{BatchPlan, Families, Planner};
use super::discriminator::Discriminator;
use super::losses::{ce_sum, contrastive_term, matcher, Scheme};
use super::{Regime, Result, TrainConfig, TrainError};

/// Raw training data, its synthetic companions and the dev split.
#[derive(Clone, Copy, Debug)]
pub struct Corpora<'a> {
    pub raw: &'a [AbsaInstance],
    pub synthetic: &'a [SyntheticSample],
    pub dev: &'a [AbsaInstance],
}

/// Encoded corpora plus the lookups the batch builder needs.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub raw: Vec<Encoded>,
    pub raw_labels: Vec<usize>,
    pub raw_ids: Vec<String>,
    pub synthetic: Vec<Encoded>,
    pub synthetic_labels: Vec<usize>,
    pub synthetic_kinds: Vec<usize>,
    pub synthetic_ids: Vec<String>,
    pub families: Families,
}

impl Prepared {
    pub fn new(model: &Model, raw: &[AbsaInstance], synthetic: &[SyntheticSample]) -> Result<Self> {
        Ok(Self {
            raw: raw
                .iter()
                .map(|i| model.encode(i))
                .collect::<std::result::Result<_, _>>()?,
            raw_labels: raw.iter().map(|i| i.label.index()).collect(),
            raw_ids: raw.iter().map(|i| i.id.clone()).collect(),
            synthetic: synthetic
                .iter()
                .map(|s| model.encode(&s.instance))
                .collect::<std::result::Result<_, _>>()?,
            synthetic_labels: synthetic.iter().map(|s| s.instance.label.index()).collect(),
            synthetic_kinds: synthetic.iter().map(|s| s.kind.index()).collect(),
            synthetic_ids: synthetic.iter().map(|s| s.id().to_string()).collect(),
            families: Families::build(raw, synthetic)?,
        })
    }
}

/// The networks a batch objective runs through.
#[derive(Clone, Copy, Debug)]
pub struct Networks<'a> {
    pub config: &'a ModelConfig,
    pub raw: &'a Network,
    pub synthetic: &'a Network,
    pub discriminator: Option<&'a Discriminator>,
}

impl<'a> Networks<'a> {
    pub fn of(
        model: &'a Model,
        cfg: &TrainConfig,
        discriminator: Option<&'a Discriminator>,
    ) -> Result<Self> {
        let synthetic = if cfg.share_weights {
            &model.primary
        } else {
            model.secondary.as_ref().ok_or_else(|| {
                TrainError::Config("separate weights requested but model has one network".into())
            })?
        };
        Ok(Self {
            config: &model.config,
            raw: &model.primary,
            synthetic,
            discriminator,
        })
    }
}

/// Loss values of one batch. Sums are over instances; `total` is the
/// objective the classifier minimizes.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossComponents {
    /// Distinct instances forwarded (raw plus synthetic).
    pub n: usize,
    pub raw: usize,
    pub paired: usize,
    pub ce_raw: f64,
    pub ce_synthetic: f64,
    /// Discriminator cross-entropy over the paired samples.
    pub type_ce: f64,
    /// Per-scheme sums in `Scheme::ALL` order.
    pub contrastive: [f64; 4],
    /// `Σ λ_ci · contrastive[i]`.
    pub contrastive_weighted: f64,
    pub l_e: f64,
    pub l_a: Option<f64>,
    pub l_c: Option<f64>,
    pub total: f64,
}

impl LossComponents {
    /// What the discriminator minimizes.
    pub fn discriminator_objective(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.type_ce / self.n as f64
        }
    }
}

pub struct BatchGraph {
    pub tape: Tape,
    /// Scalar whose gradient is the update direction for every parameter,
    /// discriminator included.
    pub objective: Var,
    pub components: LossComponents,
}

fn forward_all(
    tape: &mut Tape,
    store: &ParamStore,
    net: &Network,
    cfg: &ModelConfig,
    inputs: &[Encoded],
    which: impl IntoIterator<Item = usize>,
    train: bool,
) -> Result<BTreeMap<usize, ForwardVars>> {
    let mut out = BTreeMap::new();
    for k in which {
        if let std::collections::btree_map::Entry::Vacant(e) = out.entry(k) {
            e.insert(net.forward(tape, store, cfg, &inputs[k], train)?);
        }
    }
    Ok(out)
}

/// Build the regime's objective for one planned batch.
pub fn batch_graph(
    nets: &Networks<'_>,
    store: &ParamStore,
    cfg: &TrainConfig,
    data: &Prepared,
    plan: &BatchPlan,
    key: DropoutKey,
    train: bool,
) -> Result<BatchGraph> {
    if plan.raw.is_empty() {
        return Err(TrainError::Structure("empty batch".into()));
    }
    let mut tape = Tape::with_dropout_key(key);
    let raw = forward_all(
        &mut tape,
        store,
        nets.raw,
        nets.config,
        &data.raw,
        plan.raw.iter().copied(),
        train,
    )?;
    let syn_ids = plan.synthetic();
    let syn = forward_all(
        &mut tape,
        store,
        nets.synthetic,
        nets.config,
        &data.synthetic,
        syn_ids.iter().copied(),
        train,
    )?;
    let mut c = LossComponents {
        n: raw.len() + syn.len(),
        raw: plan.raw.len(),
        ..LossComponents::default()
    };
    let n = c.n as f64;

    let logits: Vec<Var> = plan.raw.iter().map(|r| raw[r].logits).collect();
    let targets: Vec<usize> = plan.raw.iter().map(|&r| data.raw_labels[r]).collect();
    let ce_raw = ce_sum(&mut tape, &logits, &targets)?;
    c.ce_raw = tape.scalar(ce_raw);
    c.l_e = c.ce_raw / plan.raw.len() as f64;

    let (mut objective, mut total) = if cfg.regime.adversarial() && !plan.pairs.is_empty() {
        let disc = nets.discriminator.ok_or_else(|| {
            TrainError::Config("adversarial regime without a discriminator".into())
        })?;
        let logits: Vec<Var> = plan.pairs.iter().map(|(_, s)| syn[s].logits).collect();
        let targets: Vec<usize> = plan
            .pairs
            .iter()
            .map(|&(_, s)| data.synthetic_labels[s])
            .collect();
        let ce_syn = ce_sum(&mut tape, &logits, &targets)?;
        let mut vs = Vec::with_capacity(plan.pairs.len());
        for (r, s) in &plan.pairs {
            let v = matcher(&mut tape, raw[r].r_adv, syn[s].r_adv)?;
            vs.push(tape.grad_reverse(v, cfg.lambda_a)?);
        }
        let vs = tape.concat_rows(&vs)?;
        let d_logits = disc.forward(&mut tape, store, vs)?;
        let kinds: Vec<usize> = plan
            .pairs
            .iter()
            .map(|&(_, s)| data.synthetic_kinds[s])
            .collect();
        let type_ce = tape.cross_entropy(d_logits, &kinds)?;
        let type_ce = tape.scale(type_ce, kinds.len() as f64)?;
        c.paired = plan.pairs.len();
        c.ce_synthetic = tape.scalar(ce_syn);
        c.type_ce = tape.scalar(type_ce);
        let l_a = (c.ce_raw + c.ce_synthetic - cfg.lambda_a * c.type_ce) / n;
        c.l_a = Some(l_a);
        let sum = tape.add(ce_raw, ce_syn)?;
        let sum = tape.add(sum, type_ce)?;
        (tape.scale(sum, 1.0 / n)?, l_a)
    } else {
        (tape.scale(ce_raw, 1.0 / plan.raw.len() as f64)?, c.l_e)
    };

    if cfg.regime.contrastive() {
        let mut weighted: Option<Var> = None;
        for scheme in Scheme::ALL {
            let pick = |f: &ForwardVars| if scheme.structural() { f.r_s } else { f.r_f };
            let mut sum: Option<Var> = None;
            for set in &plan.contrast {
                let negs = if scheme.inter() {
                    &set.inter_negatives
                } else {
                    &set.intra_negatives
                };
                if set.positives.is_empty() || negs.is_empty() {
                    continue;
                }
                let anchor = pick(&raw[&set.anchor]);
                let pos: Vec<Var> = set.positives.iter().map(|s| pick(&syn[s])).collect();
                let neg: Vec<Var> = negs.iter().map(|s| pick(&syn[s])).collect();
                let term = contrastive_term(&mut tape, anchor, &pos, &neg, cfg.mu)?;
                sum = Some(match sum {
                    Some(acc) => tape.add(acc, term)?,
                    None => term,
                });
            }
            if let Some(sum) = sum {
                let i = scheme.index();
                c.contrastive[i] = tape.scalar(sum);
                c.contrastive_weighted += cfg.lambda_c[i] * c.contrastive[i];
                let w = tape.scale(sum, cfg.lambda_c[i])?;
                weighted = Some(match weighted {
                    Some(acc) => tape.add(acc, w)?,
                    None => w,
                });
            }
        }
        let l_c = c.contrastive_weighted / n;
        c.l_c = Some(l_c);
        total += l_c;
        if let Some(w) = weighted {
            let w = tape.scale(w, 1.0 / n)?;
            objective = tape.add(objective, w)?;
        }
    }
    c.total = total;
    Ok(BatchGraph {
        tape,
        objective,
        components: c,
    })
}

/// Everything needed to reproduce a failing batch.
#[derive(Clone, Debug, Serialize)]
pub struct BatchDump {
    pub iteration: usize,
    pub epoch: usize,
    pub raw_ids: Vec<String>,
    pub synthetic_ids: Vec<String>,
    pub pairs: Vec<(String, String)>,
    pub components: LossComponents,
    /// Parameters whose value or gradient is not finite.
    pub non_finite_params: Vec<String>,
    /// The tape operation that first produced a non-finite value, if any.
    pub failed_op: Option<String>,
}

#[derive(Serialize)]
struct IterationRecord<'a> {
    record: &'static str,
    iteration: usize,
    epoch: usize,
    #[serde(flatten)]
    components: &'a LossComponents,
}

#[derive(Serialize)]
struct EpochRecord {
    record: &'static str,
    epoch: usize,
    iteration: usize,
    dev_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_accuracy: Option<f64>,
    best: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub iterations: usize,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    pub final_train_accuracy: Option<f64>,
    pub stopped_early: bool,
    /// Contrastive anchors skipped per scheme, over the whole run.
    pub skipped_anchors: [usize; 4],
}

/// Accuracy of the primary network over already-encoded inputs.
pub fn accuracy(model: &Model, inputs: &[Encoded], labels: &[usize]) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for (x, &y) in inputs.iter().zip(labels) {
        if model.predict_encoded(x)?.label.index() == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / inputs.len() as f64)
}

/// Register whatever the regime needs beyond the primary network.
pub fn prepare_model(model: &mut Model, cfg: &TrainConfig) -> Result<Option<Discriminator>> {
    if !cfg.share_weights {
        model.add_secondary()?;
    }
    if !cfg.regime.adversarial() {
        return Ok(None);
    }
    match Discriminator::from_store(&model.store) {
        Ok(d) => Ok(Some(d)),
        Err(_) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd15c);
            let d_in = 4 * model.config.d_adv();
            Ok(Some(Discriminator::register(
                &mut model.store,
                d_in,
                cfg.disc_hidden,
                &mut rng,
            )?))
        }
    }
}

fn check_corpora(cfg: &TrainConfig, corpora: &Corpora<'_>) -> Result<()> {
    if corpora.raw.is_empty() {
        return Err(TrainError::MissingCorpus("training corpus is empty".into()));
    }
    if cfg.regime.adversarial() && corpora.synthetic.is_empty() {
        return Err(TrainError::MissingCorpus(format!(
            "regime {} needs a synthetic corpus",
            cfg.regime
        )));
    }
    if cfg.regime.contrastive()
        && !corpora
            .synthetic
            .iter()
            .any(|s| s.kind == SyntheticKind::SentimentMod)
    {
        return Err(TrainError::MissingCorpus(format!(
            "regime {} needs sentiment-modified samples for contrastive pairs",
            cfg.regime
        )));
    }
    Ok(())
}

fn non_finite_op(e: &TrainError) -> Option<&'static str> {
    match e {
        TrainError::Autodiff(AutodiffError::NonFinite { op })
        | TrainError::Model(ModelError::Autodiff(AutodiffError::NonFinite { op })) => Some(op),
        _ => None,
    }
}

/// Mini-batch training with Adam and dev-accuracy early stopping. The best
/// dev checkpoint is restored into `model` at the end. One JSON record per
/// iteration and per epoch goes to `log`.
pub fn train(
    model: &mut Model,
    cfg: &TrainConfig,
    corpora: Corpora<'_>,
    log: &mut dyn Write,
) -> Result<TrainSummary> {
    cfg.validate()?;
    check_corpora(cfg, &corpora)?;
    let synthetic: &[SyntheticSample] = if cfg.regime == Regime::E {
        &[]
    } else {
        corpora.synthetic
    };
    let disc = prepare_model(model, cfg)?;
    let data = Prepared::new(model, corpora.raw, synthetic)?;
    let (dev, dev_labels) = if corpora.dev.is_empty() {
        warn!("no dev corpus; early stopping on training accuracy");
        (data.raw.clone(), data.raw_labels.clone())
    } else {
        let dev: Vec<Encoded> = corpora
            .dev
            .iter()
            .map(|i| model.encode(i))
            .collect::<std::result::Result<_, _>>()?;
        (dev, corpora.dev.iter().map(|i| i.label.index()).collect())
    };
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.raw.len()).collect();
    let mut summary = TrainSummary {
        best_dev_accuracy: f64::NEG_INFINITY,
        ..TrainSummary::default()
    };
    let mut best_store = model.store.clone();
    let mut since_best = 0;
    let mut iteration = 0;
    'epochs: for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let planner = Planner {
                raw: corpora.raw,
                synthetic,
                families: &data.families,
                adversarial: cfg.regime.adversarial(),
                contrastive: cfg.regime.contrastive(),
                positives: cfg.positives,
                negatives: cfg.negatives,
            };
            let plan = planner.plan(chunk, &mut rng);
            for (acc, s) in summary.skipped_anchors.iter_mut().zip(plan.skipped) {
                *acc += s;
            }
            let key = DropoutKey {
                seed: cfg.seed,
                step: iteration as u64,
            };
            let nets = Networks::of(model, cfg, disc.as_ref())?;
            let dump = |components: LossComponents, bad: Vec<String>, failed_op: Option<String>| {
                TrainError::NonFinite(Box::new(BatchDump {
                    iteration,
                    epoch,
                    raw_ids: plan.raw.iter().map(|&r| data.raw_ids[r].clone()).collect(),
                    synthetic_ids: plan
                        .synthetic()
                        .iter()
                        .map(|&s| data.synthetic_ids[s].clone())
                        .collect(),
                    pairs: plan
                        .pairs
                        .iter()
                        .map(|&(r, s)| (data.raw_ids[r].clone(), data.synthetic_ids[s].clone()))
                        .collect(),
                    components,
                    non_finite_params: bad,
                    failed_op,
                }))
            };
            let bad_values = || -> Vec<String> {
                model
                    .store
                    .iter()
                    .filter(|(_, _, t)| !t.is_finite())
                    .map(|(_, name, _)| name.to_string())
                    .collect()
            };
            let graph = match batch_graph(&nets, &model.store, cfg, &data, &plan, key, true) {
                Err(e) => match non_finite_op(&e) {
                    Some(op) => {
                        return Err(dump(
                            LossComponents::default(),
                            bad_values(),
                            Some(op.to_string()),
                        ))
                    }
                    None => return Err(e),
                },
                Ok(g) => g,
            };
            let grads = match graph.tape.backward(graph.objective) {
                Err(AutodiffError::NonFinite { op }) => {
                    return Err(dump(graph.components, bad_values(), Some(op.to_string())));
                }
                other => other?.param_grads(&model.store),
            };
            let mut bad = bad_values();
            bad.extend(
                model
                    .store
                    .iter()
                    .zip(&grads)
                    .filter(|((_, _, t), g)| t.is_finite() && !g.is_finite())
                    .map(|((_, name, _), _)| name.to_string()),
            );
            let objective = graph.tape.scalar(graph.objective);
            if !objective.is_finite() || !graph.components.total.is_finite() || !bad.is_empty() {
                return Err(dump(graph.components, bad, None));
            }
            adam.step(&mut model.store, &grads);
            serde_json::to_writer(
                &mut *log,
                &IterationRecord {
                    record: "iteration",
                    iteration,
                    epoch,
                    components: &graph.components,
                },
            )?;
            writeln!(log)?;
            iteration += 1;
            if cfg.max_iterations > 0 && iteration >= cfg.max_iterations {
                summary.epochs = epoch + 1;
                summary.iterations = iteration;
                end_epoch(
                    model,
                    cfg,
                    &data,
                    &dev,
                    &dev_labels,
                    epoch,
                    iteration,
                    &mut summary,
                    &mut best_store,
                    log,
                )?;
                break 'epochs;
            }
        }
        summary.epochs = epoch + 1;
        summary.iterations = iteration;
        let improved = end_epoch(
            model,
            cfg,
            &data,
            &dev,
            &dev_labels,
            epoch,
            iteration,
            &mut summary,
            &mut best_store,
            log,
        )?;
        since_best = if improved { 0 } else { since_best + 1 };
        if cfg.patience > 0 && since_best >= cfg.patience {
            info!("early stop after epoch {epoch}");
            summary.stopped_early = true;
            break;
        }
    }
    model.store = best_store;
    if cfg.track_train_accuracy {
        summary.final_train_accuracy = Some(accuracy(model, &data.raw, &data.raw_labels)?);
    }
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn end_epoch(
    model: &Model,
    cfg: &TrainConfig,
    data: &Prepared,
    dev: &[Encoded],
    dev_labels: &[usize],
    epoch: usize,
    iteration: usize,
    summary: &mut TrainSummary,
    best_store: &mut ParamStore,
    log: &mut dyn Write,
) -> Result<bool> {
    let dev_accuracy = accuracy(model, dev, dev_labels)?;
    let train_accuracy = if cfg.track_train_accuracy {
        Some(accuracy(model, &data.raw, &data.raw_labels)?)
    } else {
        None
    };
    let best = dev_accuracy > summary.best_dev_accuracy;
    if best {
        summary.best_dev_accuracy = dev_accuracy;
        summary.best_epoch = epoch;
        *best_store = model.store.clone();
    }
    info!("epoch {epoch}: dev accuracy {dev_accuracy:.4}");
    serde_json::to_writer(
        &mut *log,
        &EpochRecord {
            record: "epoch",
            epoch,
            iteration,
            dev_accuracy,
            train_accuracy,
            best,
        },
    )?;
    writeln!(log)?;
    Ok(best)
}

/// Held-out accuracy of the type discriminator on every (source, sample)
/// pair, without dropout.
pub fn discriminator_accuracy(
    model: &Model,
    cfg: &TrainConfig,
    disc: &Discriminator,
    raw: &[AbsaInstance],
    synthetic: &[SyntheticSample],
) -> Result<f64> {
    let data = Prepared::new(model, raw, synthetic)?;
    let nets = Networks::of(model, cfg, Some(disc))?;
    let sources: BTreeMap<&str, usize> = raw
        .iter()
        .enumerate()
        .map(|(k, r)| (r.id.as_str(), k))
        .collect();
    if synthetic.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for (s, sample) in synthetic.iter().enumerate() {
        let r = sources[sample.source_id.as_str()];
        let mut tape = Tape::new();
        let fo = nets
            .raw
            .forward(&mut tape, &model.store, nets.config, &data.raw[r], false)?;
        let fs = nets.synthetic.forward(
            &mut tape,
            &model.store,
            nets.config,
            &data.synthetic[s],
            false,
        )?;
        let v = matcher(&mut tape, fo.r_adv, fs.r_adv)?;
        let logits = disc.forward(&mut tape, &model.store, v)?;
        if argmax(tape.value(logits).data()) == sample.kind.index() {
            correct += 1;
        }
    }
    Ok(correct as f64 / synthetic.len() as f64)
}

/// Mean cosine of `r_f` between each raw instance and its same-label
/// sentiment-modified samples, and between it and every other family member
/// (opposite-label rewrites and aspect additions).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PairCosines {
    pub positive: f64,
    pub negative: f64,
    pub positive_pairs: usize,
    pub negative_pairs: usize,
}

pub fn pair_cosines(
    model: &Model,
    raw: &[AbsaInstance],
    synthetic: &[SyntheticSample],
) -> Result<PairCosines> {
    let families = Families::build(raw, synthetic)?;
    let syn = synthetic
        .iter()
        .map(|s| Ok(model.predict(&s.instance)?.r_f))
        .collect::<Result<Vec<_>>>()?;
    let mut out = PairCosines::default();
    for (k, inst) in raw.iter().enumerate() {
        if !families.has_any(k) {
            continue;
        }
        let anchor = model.predict(inst)?.r_f;
        for &s in families.of(k, SyntheticKind::SentimentMod) {
            let c = cosine(&anchor, &syn[s]);
            if synthetic[s].instance.label == inst.label {
                out.positive += c;
                out.positive_pairs += 1;
            } else {
                out.negative += c;
                out.negative_pairs += 1;
            }
        }
        for &s in families.of(k, SyntheticKind::AspectAddition) {
            out.negative += cosine(&anchor, &syn[s]);
            out.negative_pairs += 1;
        }
    }
    out.positive /= out.positive_pairs.max(1) as f64;
    out.negative /= out.negative_pairs.max(1) as f64;
    Ok(out)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(COSINE_EPS);
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(COSINE_EPS);
    dot / (na * nb)
}

/// Labels of a corpus as indices.
pub fn label_indices(corpus: &[AbsaInstance]) -> Vec<usize> {
    corpus.iter().map(|i| i.label.index()).collect()
}

/// Predicted polarity of every instance.
pub fn predictions(model: &Model, corpus: &[AbsaInstance]) -> Result<Vec<Polarity>> {
    corpus.iter().map(|i| Ok(model.predict(i)?.label)).collect()
}
