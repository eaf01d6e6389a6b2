//! End-to-end gradients of every regime, the loss bookkeeping, and the
//! training loop's determinism and failure handling.

use rabsa_autodiff::{DropoutKey, COSINE_EPS};
use rabsa_core::augment::{augment_corpus, AugmentConfig, SyntheticSample};
use rabsa_core::corpus::AbsaInstance;
use rabsa_core::model::{Model, ModelConfig, Vocab};
use rabsa_core::toy::{separable, ToyCorpus};
use rabsa_core::training::{
    batch_graph, check_regime, contrastive_value, prepare_model, train, Corpora, Networks, Planner,
    Prepared, Regime, TrainConfig, TrainError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const END_TO_END_TOL: f64 = 1e-3;

fn tiny() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 16,
        d_gcn: 6,
        n_gcn_layers: 2,
        d_label: 4,
        ..ModelConfig::desk()
    }
}

struct Setup {
    toy: ToyCorpus,
    raw: Vec<AbsaInstance>,
    synthetic: Vec<SyntheticSample>,
    vocab: Vocab,
}

/// The first `n` training instances that have samples of every kind.
fn setup(n: usize) -> Setup {
    let toy = ToyCorpus::load().unwrap();
    let out = augment_corpus(
        &toy.train,
        &toy.lexicons,
        &AugmentConfig::default(),
        &toy.paraphraser(),
        &toy.vectors,
    );
    let all = out.all();
    let raw: Vec<AbsaInstance> = toy
        .train
        .iter()
        .filter(|r| {
            let kinds: std::collections::BTreeSet<_> = all
                .iter()
                .filter(|s| s.source_id == r.id)
                .map(|s| s.kind)
                .collect();
            kinds.len() >= 2
        })
        .take(n)
        .cloned()
        .collect();
    assert_eq!(raw.len(), n);
    let synthetic: Vec<SyntheticSample> = all
        .into_iter()
        .filter(|s| raw.iter().any(|r| r.id == s.source_id))
        .collect();
    let syn_inst: Vec<AbsaInstance> = synthetic.iter().map(|s| s.instance.clone()).collect();
    let vocab = Vocab::from_corpora(&[&toy.train, &syn_inst]);
    Setup {
        toy,
        raw,
        synthetic,
        vocab,
    }
}

fn regime_gradients(regime: Regime, share_weights: bool) {
    let s = setup(4);
    let mut model = Model::new(tiny(), s.vocab.clone(), s.toy.labels.clone()).unwrap();
    let cfg = TrainConfig {
        regime,
        share_weights,
        disc_hidden: 5,
        ..TrainConfig::default()
    };
    let corpora = Corpora {
        raw: &s.raw,
        synthetic: &s.synthetic,
        dev: &[],
    };
    let groups = check_regime(&mut model, &cfg, corpora, 3, 17).unwrap();
    let mut names: Vec<&str> = groups.iter().map(|g| g.group.as_str()).collect();
    names.sort();
    for want in [
        "agg",
        "cls",
        "enc.attn",
        "enc.emb",
        "enc.ffn",
        "enc.ln",
        "gcn.label",
        "gcn.layer",
    ] {
        assert!(names.contains(&want), "{want} not checked");
    }
    if regime.adversarial() {
        assert!(names.contains(&"disc"));
    }
    if !share_weights {
        assert!(names.iter().any(|n| n.starts_with("syn.")));
    }
    for g in &groups {
        assert!(
            g.max_rel_error < END_TO_END_TOL,
            "{regime:?} {}: {:e}",
            g.group,
            g.max_rel_error
        );
    }
}

#[test]
fn gradients_regime_e() {
    regime_gradients(Regime::E, true);
}

#[test]
fn gradients_regime_a() {
    regime_gradients(Regime::A, true);
}

#[test]
fn gradients_regime_ec() {
    regime_gradients(Regime::EC, true);
}

#[test]
fn gradients_regime_ac() {
    regime_gradients(Regime::AC, true);
}

#[test]
fn gradients_with_separate_synthetic_encoder() {
    regime_gradients(Regime::AC, false);
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(COSINE_EPS);
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(COSINE_EPS);
    dot / (na * nb)
}

#[test]
fn loss_components_add_up() {
    let s = setup(6);
    let mut model = Model::new(tiny(), s.vocab.clone(), s.toy.labels.clone()).unwrap();
    let cfg = TrainConfig {
        regime: Regime::AC,
        lambda_c: [0.3, 0.2, 0.3, 0.2],
        ..TrainConfig::default()
    };
    let disc = prepare_model(&mut model, &cfg).unwrap();
    let data = Prepared::new(&model, &s.raw, &s.synthetic).unwrap();
    let planner = Planner {
        raw: &s.raw,
        synthetic: &s.synthetic,
        families: &data.families,
        adversarial: true,
        contrastive: true,
        positives: cfg.positives,
        negatives: cfg.negatives,
    };
    let all: Vec<usize> = (0..s.raw.len()).collect();
    let plan = planner.plan(&all, &mut ChaCha8Rng::seed_from_u64(3));
    assert!(!plan.contrast.is_empty());
    let nets = Networks::of(&model, &cfg, disc.as_ref()).unwrap();
    let g = batch_graph(
        &nets,
        &model.store,
        &cfg,
        &data,
        &plan,
        DropoutKey::default(),
        false,
    )
    .unwrap();
    let c = &g.components;

    let raw_p: Vec<_> = s.raw.iter().map(|i| model.predict(i).unwrap()).collect();
    let syn_p: Vec<_> = s
        .synthetic
        .iter()
        .map(|x| model.predict(&x.instance).unwrap())
        .collect();
    let mut independent = [0.0; 4];
    for (k, slot) in independent.iter_mut().enumerate() {
        let inter = k >= 2;
        let structural = k % 2 == 1;
        let pick = |p: &rabsa_core::model::Prediction| {
            if structural {
                p.r_s.clone()
            } else {
                p.r_f.clone()
            }
        };
        for set in &plan.contrast {
            let negs = if inter {
                &set.inter_negatives
            } else {
                &set.intra_negatives
            };
            if set.positives.is_empty() || negs.is_empty() {
                continue;
            }
            let a = pick(&raw_p[set.anchor]);
            let pos: Vec<f64> = set
                .positives
                .iter()
                .map(|&j| cosine(&a, &pick(&syn_p[j])))
                .collect();
            let neg: Vec<f64> = negs.iter().map(|&j| cosine(&a, &pick(&syn_p[j]))).collect();
            *slot += contrastive_value(&pos, &neg, cfg.mu);
        }
        assert!(
            (c.contrastive[k] - *slot).abs() < 1e-9,
            "scheme {k}: {} vs {}",
            c.contrastive[k],
            slot
        );
    }
    let weighted: f64 = (0..4).map(|k| cfg.lambda_c[k] * c.contrastive[k]).sum();
    assert!((c.contrastive_weighted - weighted).abs() < 1e-12);
    let n = (plan.raw.len() + plan.synthetic().len()) as f64;
    assert_eq!(c.n as f64, n);
    let l_c = c.l_c.unwrap();
    assert!((l_c - weighted / n).abs() < 1e-12);
    let l_a = c.l_a.unwrap();
    assert!((l_a - (c.ce_raw + c.ce_synthetic - cfg.lambda_a * c.type_ce) / n).abs() < 1e-12);
    assert!((c.total - (l_a + l_c)).abs() < 1e-12);
    assert!((c.l_e - c.ce_raw / plan.raw.len() as f64).abs() < 1e-12);
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        max_epochs: 4,
        patience: 0,
        lr: 1e-3,
        batch_size: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_logs_every_step() {
    let raw = separable(24, 2);
    let dev = separable(9, 3);
    let labels = ToyCorpus::load().unwrap().labels;
    let run = || {
        let mut m = Model::new(tiny(), Vocab::from_corpora(&[&raw, &dev]), labels.clone()).unwrap();
        let mut log = Vec::new();
        let s = train(
            &mut m,
            &quick_cfg(),
            Corpora {
                raw: &raw,
                synthetic: &[],
                dev: &dev,
            },
            &mut log,
        )
        .unwrap();
        (m.store, log, s)
    };
    let (a, log_a, sa) = run();
    let (b, log_b, _) = run();
    assert_eq!(log_a, log_b);
    for ((_, _, x), (_, _, y)) in a.iter().zip(b.iter()) {
        assert_eq!(x.data(), y.data());
    }
    let text = String::from_utf8(log_a).unwrap();
    let iterations = text
        .lines()
        .filter(|l| l.contains("\"record\":\"iteration\""))
        .count();
    let epochs = text
        .lines()
        .filter(|l| l.contains("\"record\":\"epoch\""))
        .count();
    assert_eq!(iterations, sa.iterations);
    assert_eq!(epochs, 4);
    assert_eq!(sa.iterations, 4 * 3);
}

#[test]
fn regimes_that_need_synthetic_data_refuse_to_start_without_it() {
    let raw = separable(6, 0);
    let labels = ToyCorpus::load().unwrap().labels;
    for regime in [Regime::A, Regime::EC, Regime::AC] {
        let mut m = Model::new(tiny(), Vocab::from_corpora(&[&raw]), labels.clone()).unwrap();
        let cfg = TrainConfig {
            regime,
            ..quick_cfg()
        };
        let err = train(
            &mut m,
            &cfg,
            Corpora {
                raw: &raw,
                synthetic: &[],
                dev: &[],
            },
            &mut std::io::sink(),
        );
        assert!(
            matches!(err, Err(TrainError::MissingCorpus(_))),
            "{regime:?}"
        );
    }
}

#[test]
fn non_finite_loss_aborts_with_a_dump() {
    let raw = separable(6, 0);
    let labels = ToyCorpus::load().unwrap().labels;
    let mut m = Model::new(tiny(), Vocab::from_corpora(&[&raw]), labels).unwrap();
    let id = m.store.id("cls.b").unwrap();
    m.store.get_mut(id).data_mut()[0] = f64::NAN;
    let err = train(
        &mut m,
        &quick_cfg(),
        Corpora {
            raw: &raw,
            synthetic: &[],
            dev: &[],
        },
        &mut std::io::sink(),
    )
    .unwrap_err();
    match err {
        TrainError::NonFinite(dump) => {
            assert_eq!(dump.iteration, 0);
            assert!(!dump.raw_ids.is_empty());
            assert!(dump.non_finite_params.iter().any(|p| p == "cls.b"));
            assert!(dump.failed_op.is_some());
        }
        other => panic!("unexpected {other}"),
    }
}
