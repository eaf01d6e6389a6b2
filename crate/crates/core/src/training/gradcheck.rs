use std::collections::BTreeMap;

use rabsa_autodiff::gradcheck::{central_difference, relative_error};
use rabsa_autodiff::DropoutKey;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{Model, SECONDARY_PREFIX};

use super::batch::Planner;
use super::discriminator::DISCRIMINATOR_PREFIX;
use super::trainer::{batch_graph, prepare_model, Corpora, Networks, Prepared};
use super::{Result, TrainConfig};

/// Finite-difference step used against the full model.
pub const MODEL_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupCheck {
    pub group: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Coarse parameter group of a parameter name.
pub fn param_group(name: &str) -> String {
    if let Some(rest) = name.strip_prefix(SECONDARY_PREFIX) {
        return format!("syn.{}", param_group(rest));
    }
    if name.starts_with(DISCRIMINATOR_PREFIX) {
        return "disc".into();
    }
    let last = name.rsplit('.').next().unwrap_or(name);
    let group = if name.starts_with("enc.") {
        match last {
            "word_emb" | "pos_emb" | "seg_emb" => "enc.emb",
            "wq" | "bq" | "wk" | "bk" | "wv" | "bv" | "wo" | "bo" => "enc.attn",
            "w1" | "b1" | "w2" | "b2" => "enc.ffn",
            _ => "enc.ln",
        }
    } else if name == "gcn.label_emb" {
        "gcn.label"
    } else if name.starts_with("gcn.") {
        "gcn.layer"
    } else if name.starts_with("agg.") {
        "agg"
    } else if name.starts_with("cls.") {
        "cls"
    } else {
        "other"
    };
    group.into()
}

/// Compare the gradients `train` would apply on one batch of `corpora.raw`
/// against central differences of the objective each parameter descends:
/// the classifier's total loss, or the type cross-entropy for discriminator
/// parameters. Checks `per_param` entries of every parameter, preferring
/// entries the batch actually reaches.
pub fn check_regime(
    model: &mut Model,
    cfg: &TrainConfig,
    corpora: Corpora<'_>,
    per_param: usize,
    seed: u64,
) -> Result<Vec<GroupCheck>> {
    cfg.validate()?;
    let disc = prepare_model(model, cfg)?;
    let synthetic = if cfg.regime.adversarial() || cfg.regime.contrastive() {
        corpora.synthetic
    } else {
        &[]
    };
    let data = Prepared::new(model, corpora.raw, synthetic)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planner = Planner {
        raw: corpora.raw,
        synthetic,
        families: &data.families,
        adversarial: cfg.regime.adversarial(),
        contrastive: cfg.regime.contrastive(),
        positives: cfg.positives,
        negatives: cfg.negatives,
    };
    let all: Vec<usize> = (0..corpora.raw.len()).collect();
    let plan = planner.plan(&all, &mut rng);
    let key = DropoutKey { seed, step: 0 };
    let nets = Networks::of(model, cfg, disc.as_ref())?;
    let graph = batch_graph(&nets, &model.store, cfg, &data, &plan, key, true)?;
    let grads = graph
        .tape
        .backward(graph.objective)?
        .param_grads(&model.store);

    let mut store = model.store.clone();
    let mut groups: BTreeMap<String, GroupCheck> = BTreeMap::new();
    let ids: Vec<_> = store.ids().collect();
    for (id, grad) in ids.into_iter().zip(&grads) {
        let name = store.name(id).to_string();
        let is_disc = name.starts_with(DISCRIMINATOR_PREFIX);
        let reached: Vec<usize> = (0..grad.numel())
            .filter(|&k| grad.data()[k] != 0.0)
            .collect();
        let picks: Vec<usize> = if reached.is_empty() {
            vec![rand::Rng::gen_range(&mut rng, 0..grad.numel())]
        } else {
            reached
                .choose_multiple(&mut rng, per_param.min(reached.len()))
                .copied()
                .collect()
        };
        let group = param_group(&name);
        let entry = groups.entry(group.clone()).or_insert(GroupCheck {
            group,
            checked: 0,
            max_rel_error: 0.0,
        });
        for k in picks {
            let numeric = central_difference(&mut store, id, k, MODEL_STEP, |s| {
                let g = batch_graph(&nets, s, cfg, &data, &plan, key, true).map_err(|e| {
                    rabsa_autodiff::AutodiffError::Shape {
                        op: "gradcheck",
                        detail: e.to_string(),
                    }
                })?;
                Ok(if is_disc {
                    g.components.discriminator_objective()
                } else {
                    g.components.total
                })
            })?;
            entry.checked += 1;
            entry.max_rel_error = entry
                .max_rel_error
                .max(relative_error(grad.data()[k], numeric));
        }
    }
    Ok(groups.into_values().collect())
}
