use crate::corpus::{AbsaInstance, HeadRef, InsertToken};

use super::confidence::{addition_confidence, addition_retained, aspect_similarity};
use super::sample::{SyntheticKind, SyntheticSample};
use super::units::{AspectUnit, Embedder};

#[derive(Clone, Debug, PartialEq)]
pub struct AspectAdditionConfig {
    /// Units added per sample.
    pub j: usize,
    pub theta_m: f64,
    /// Samples built per target aspect.
    pub per_target: usize,
    /// Cap on unit combinations examined per target.
    pub max_combinations: usize,
}

impl Default for AspectAdditionConfig {
    fn default() -> Self {
        Self {
            j: 2,
            theta_m: 0.85,
            per_target: 2,
            max_combinations: 5000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct AspectAdditionStats {
    pub no_embedding: usize,
    pub too_few_units: usize,
    pub below_threshold: usize,
}

fn lower(words: &[String]) -> Vec<String> {
    words.iter().map(|w| w.to_lowercase()).collect()
}

/// Advance `idx` to the next `k`-combination of `0..n` in lexicographic
/// order; false when exhausted.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Append units to the sentence as coordinated clauses: `, and <unit>`
/// before the final punctuation, the unit root attached to the sentence root
/// with `conj`.
pub fn graft_units(
    inst: &AbsaInstance,
    units: &[&AspectUnit],
) -> crate::corpus::Result<AbsaInstance> {
    let tree = &inst.tree;
    let n = tree.len();
    let at = if tree.token(n).upos == "PUNCT" {
        n
    } else {
        n + 1
    };
    let mut items = Vec::new();
    for unit in units {
        let base = items.len() + 2;
        let root = base + unit.root();
        items.push(InsertToken {
            form: ",".into(),
            lemma: None,
            upos: "PUNCT".into(),
            head: HeadRef::Inserted(root),
            label: "punct".into(),
        });
        items.push(InsertToken {
            form: "and".into(),
            lemma: None,
            upos: "CCONJ".into(),
            head: HeadRef::Inserted(root),
            label: "cc".into(),
        });
        for (k, t) in unit.tokens.iter().enumerate() {
            let mut form = t.form.clone();
            if k == 0 && t.upos != "PROPN" && form != "I" {
                form = form.to_lowercase();
            }
            items.push(InsertToken {
                form,
                lemma: t.lemma.clone(),
                upos: t.upos.clone(),
                head: t.head.map_or(HeadRef::Existing(tree.root()), |h| {
                    HeadRef::Inserted(base + h)
                }),
                label: if t.head.is_none() {
                    "conj".into()
                } else {
                    t.label.clone()
                },
            });
        }
    }
    let (new_tree, remap) = tree.insert(at, &items)?;
    let mut out = AbsaInstance::new(
        String::new(),
        new_tree,
        inst.aspect.remapped(&remap),
        inst.label,
    );
    out.gold_opinion = inst
        .gold_opinion
        .as_ref()
        .map(|g| g.iter().map(|&i| remap[i]).collect());
    Ok(out)
}

/// Multi-aspect variants of one instance, built from the `j` units of other
/// sentences most related to the target aspect. Within a sample the added
/// units must not all share one polarity (when `j >= 2`); confidence is the
/// mean relevance, kept only when strictly above `theta_m`.
pub fn gen_aspect_addition(
    inst: &AbsaInstance,
    units: &[AspectUnit],
    embedder: &dyn Embedder,
    j: usize,
    theta_m: f64,
) -> Vec<SyntheticSample> {
    let cfg = AspectAdditionConfig {
        j,
        theta_m,
        ..Default::default()
    };
    gen_aspect_addition_with(
        inst,
        units,
        embedder,
        &cfg,
        &mut AspectAdditionStats::default(),
    )
}

pub fn gen_aspect_addition_with(
    inst: &AbsaInstance,
    units: &[AspectUnit],
    embedder: &dyn Embedder,
    cfg: &AspectAdditionConfig,
    stats: &mut AspectAdditionStats,
) -> Vec<SyntheticSample> {
    assert!(cfg.j >= 1, "at least one unit per sample");
    let target_forms = inst.aspect_forms();
    let Some(target) = embedder.embed(&target_forms) else {
        stats.no_embedding += 1;
        return Vec::new();
    };
    let target_lower = lower(&target_forms);
    let sentence = lower(&inst.tree.forms());
    let present = |a: &[String]| sentence.windows(a.len().max(1)).any(|w| w == a);
    let mut ranked: Vec<(usize, f64)> = units
        .iter()
        .enumerate()
        .filter(|(_, u)| {
            let a = lower(&u.aspect_forms());
            u.source_id != inst.id && a != target_lower && !present(&a)
        })
        .filter_map(|(k, u)| {
            aspect_similarity(&target, &u.embedding)
                .ok()
                .map(|phi| (k, phi))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if ranked.len() < cfg.j {
        stats.too_few_units += 1;
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..cfg.j).collect();
    for _ in 0..cfg.max_combinations {
        let chosen: Vec<(usize, f64)> = idx.iter().map(|&r| ranked[r]).collect();
        let picked: Vec<&AspectUnit> = chosen.iter().map(|&(k, _)| &units[k]).collect();
        let mixed = cfg.j < 2 || picked.iter().any(|u| u.polarity != picked[0].polarity);
        let mut aspects: Vec<Vec<String>> =
            picked.iter().map(|u| lower(&u.aspect_forms())).collect();
        aspects.sort();
        aspects.dedup();
        let distinct = aspects.len() == picked.len();
        if mixed && distinct {
            let phis: Vec<f64> = chosen.iter().map(|&(_, phi)| phi).collect();
            let p_m = addition_confidence(&phis);
            if addition_retained(p_m, cfg.theta_m) {
                match graft_units(inst, &picked) {
                    Ok(new) => {
                        let mut s =
                            SyntheticSample::new(inst, SyntheticKind::AspectAddition, new, p_m);
                        s.added_units = chosen.iter().map(|&(k, _)| k).collect();
                        out.push(s);
                        if out.len() == cfg.per_target {
                            break;
                        }
                    }
                    Err(e) => log::warn!("{}: graft failed: {e}", inst.id),
                }
            } else {
                stats.below_threshold += 1;
            }
        }
        if !next_combination(&mut idx, ranked.len()) {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::opinion::OpinionRelation;
    use crate::augment::units::{build_aspect_units, UnitToken, WordVectors};
    use crate::corpus::{AspectSpan, DepTree, Polarity, Token};

    fn inst(
        id: &str,
        words: &[(&str, &str, usize, &str)],
        aspect: (usize, usize),
        label: Polarity,
    ) -> AbsaInstance {
        let tokens = words
            .iter()
            .enumerate()
            .map(|(i, (f, u, _, _))| Token::new(i + 1, *f, *u))
            .collect();
        let arcs: Vec<(usize, usize, &str)> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.2, i + 1, w.3))
            .collect();
        let tree = DepTree::from_arcs(tokens, &arcs).unwrap();
        let n = tree.len();
        AbsaInstance::new(
            id,
            tree,
            AspectSpan::new(aspect.0, aspect.1, n).unwrap(),
            label,
        )
    }

    fn seafood() -> AbsaInstance {
        inst(
            "s1",
            &[
                ("The", "DET", 2, "det"),
                ("seafoods", "NOUN", 6, "nsubj"),
                ("here", "ADV", 2, "advmod"),
                ("are", "AUX", 6, "cop"),
                ("the", "DET", 6, "det"),
                ("best", "ADJ", 0, "root"),
                ("ever", "ADV", 6, "advmod"),
            ],
            (2, 3),
            Polarity::Positive,
        )
    }

    fn unit(id: &str, aspect: &str, polarity: Polarity, embedding: Vec<f64>) -> AspectUnit {
        AspectUnit {
            source_id: id.into(),
            tokens: vec![
                UnitToken {
                    form: "good".into(),
                    lemma: None,
                    upos: "ADJ".into(),
                    head: Some(1),
                    label: "amod".into(),
                },
                UnitToken {
                    form: aspect.into(),
                    lemma: None,
                    upos: "NOUN".into(),
                    head: None,
                    label: "root".into(),
                },
            ],
            aspect_head: 1,
            aspect: vec![1],
            relation: OpinionRelation::Amod,
            polarity,
            embedding,
        }
    }

    #[test]
    fn table_one_graft() {
        let service = inst(
            "s2",
            &[
                ("the", "DET", 3, "det"),
                ("attentive", "ADJ", 3, "amod"),
                ("service", "NOUN", 0, "root"),
            ],
            (3, 4),
            Polarity::Positive,
        );
        let wv = WordVectors::parse("seafoods 1 0.2\nservice 1 0.3\n").unwrap();
        let units = build_aspect_units(&[service], &wv);
        let out = gen_aspect_addition(&seafood(), &units, &wv, 1, 0.85);
        assert_eq!(out.len(), 1);
        let s = &out[0];
        assert_eq!(
            s.instance.tree.text(),
            "The seafoods here are the best ever , and the attentive service"
        );
        assert_eq!(s.instance.label, Polarity::Positive);
        assert_eq!(s.instance.aspect_forms(), ["seafoods"]);
        let root = s.instance.tree.root();
        assert_eq!(s.instance.tree.head(12), root);
        assert_eq!(s.instance.tree.label(12), "conj");
        assert!(!s.needs_reparse);
    }

    #[test]
    fn mean_at_threshold_is_dropped() {
        // phi 0.9 and 0.8 against the target's (1, 0).
        let units = vec![
            unit("a", "wine", Polarity::Positive, vec![0.8, 0.6]),
            unit("b", "staff", Polarity::Negative, vec![0.6, 0.8]),
        ];
        let wv = WordVectors::parse("seafoods 1 0\n").unwrap();
        let out = gen_aspect_addition(&seafood(), &units, &wv, 2, 0.8);
        assert_eq!(out.len(), 1);
        let p_m = out[0].confidence;
        assert!((p_m - 0.85).abs() < 1e-12);
        assert!(gen_aspect_addition(&seafood(), &units, &wv, 2, p_m).is_empty());
    }

    #[test]
    fn uniform_polarity_pairs_are_rejected() {
        let units = vec![
            unit("a", "wine", Polarity::Positive, vec![1.0, 0.0]),
            unit("b", "staff", Polarity::Positive, vec![1.0, 0.0]),
            unit("c", "view", Polarity::Negative, vec![1.0, 0.1]),
        ];
        let wv = WordVectors::parse("seafoods 1 0\n").unwrap();
        let out = gen_aspect_addition(&seafood(), &units, &wv, 2, 0.5);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].added_units, [0, 2]);
        assert_eq!(out[1].added_units, [1, 2]);
    }

    #[test]
    fn too_few_units() {
        let units = vec![unit("a", "wine", Polarity::Positive, vec![1.0, 0.0])];
        let wv = WordVectors::parse("seafoods 1 0\n").unwrap();
        assert!(gen_aspect_addition(&seafood(), &units, &wv, 2, 0.0).is_empty());
        let single = gen_aspect_addition(&seafood(), &units, &wv, 1, 0.85);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].confidence, 1.0);
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut idx = vec![0, 1];
        let mut seen = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            seen.push(idx.clone());
        }
        assert_eq!(seen, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]);
    }
}
