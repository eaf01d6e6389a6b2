use crate::corpus::{AbsaInstance, DepTree, HeadRef, InsertToken, Polarity};
use crate::lexicon::{Relation, SentimentScores};

use super::confidence::modification_confidence;
use super::opinion::{locate_opinions, OpinionLink, OpinionRelation};
use super::sample::{SyntheticKind, SyntheticSample};
use super::{AugmentError, Lexicons};

#[derive(Clone, Debug, PartialEq)]
pub struct SentimentModConfig {
    pub theta_a: f64,
    /// Cap on combinations per target polarity when several opinion links
    /// are modified together.
    pub max_combinations: usize,
}

impl Default for SentimentModConfig {
    fn default() -> Self {
        Self {
            theta_a: 0.2,
            max_combinations: 16,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct SentimentModStats {
    pub no_opinion: usize,
    pub no_sentiment_entry: usize,
    pub undefined_confidence: usize,
    pub below_threshold: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Edit {
    Substitute(String),
    Negate,
}

#[derive(Clone, Debug)]
struct LinkOption {
    token: usize,
    edit: Edit,
    target: Polarity,
    confidence: f64,
}

/// Polarity reached by negating an expression of polarity `p`.
pub fn negation_target(p: Polarity) -> Polarity {
    match p {
        Polarity::Positive => Polarity::Negative,
        Polarity::Negative => Polarity::Positive,
        Polarity::Neutral => Polarity::Negative,
    }
}

fn best_other(scores: &SentimentScores, source: Polarity) -> Polarity {
    let mut best: Option<Polarity> = None;
    for p in Polarity::ALL {
        if p != source && best.is_none_or(|b| scores.get(p) > scores.get(b)) {
            best = Some(p);
        }
    }
    best.expect("two other polarities")
}

fn match_case(template: &str, word: &str) -> String {
    let mut chars = word.chars();
    match (template.chars().next(), chars.next()) {
        (Some(t), Some(c)) if t.is_uppercase() => c.to_uppercase().chain(chars).collect(),
        _ => word.to_string(),
    }
}

fn link_options(
    inst: &AbsaInstance,
    link: &OpinionLink,
    lex: &Lexicons,
    stats: &mut SentimentModStats,
) -> Vec<LinkOption> {
    let tree = &inst.tree;
    let o = link.head();
    let tok = tree.token(o);
    let Some(src_scores) = lex.sentiment.lookup(&tok.form, &tok.upos) else {
        stats.no_sentiment_entry += 1;
        return Vec::new();
    };
    let source = inst.label;
    let src = src_scores.get(source);
    let mut out = Vec::new();
    let mut push =
        |edit: Edit, tgt: &SentimentScores, target: Polarity, out: &mut Vec<LinkOption>| {
            match modification_confidence(src, tgt, target) {
                Ok(confidence) => out.push(LinkOption {
                    token: o,
                    edit,
                    target,
                    confidence,
                }),
                Err(_) => stats.undefined_confidence += 1,
            }
        };
    for cand in lex
        .relations
        .candidates_for(&tok.form, &tok.upos, Relation::Synonym)
    {
        if let Some(tgt) = lex.sentiment.lookup_exact(cand, &tok.upos) {
            push(Edit::Substitute(cand.clone()), &tgt, source, &mut out);
        }
    }
    let negation_only = source == Polarity::Neutral
        || matches!(
            link.relation,
            OpinionRelation::Dobj | OpinionRelation::Xcomp
        );
    let mut flipped = false;
    if !negation_only {
        for cand in lex
            .relations
            .candidates_for(&tok.form, &tok.upos, Relation::Antonym)
        {
            if let Some(tgt) = lex.sentiment.lookup_exact(cand, &tok.upos) {
                flipped = true;
                push(
                    Edit::Substitute(cand.clone()),
                    &tgt,
                    best_other(&tgt, source),
                    &mut out,
                );
            }
        }
    }
    let already_negated = tree
        .children(o)
        .any(|c| lex.negations.contains(&tree.token(c).form));
    if !flipped && !already_negated {
        push(
            Edit::Negate,
            &src_scores.negated(),
            negation_target(source),
            &mut out,
        );
    }
    out
}

/// Insertion point of a negation for the opinion head `o`: right after its
/// copula when there is one, otherwise right before `o`.
fn negation_position(tree: &DepTree, o: usize) -> usize {
    tree.children(o)
        .find(|&c| tree.base_label(c) == "cop")
        .map_or(o, |c| c + 1)
}

fn apply(
    inst: &AbsaInstance,
    edits: &[&LinkOption],
    lex: &Lexicons,
) -> Result<(DepTree, Vec<usize>), AugmentError> {
    let mut tree = inst.tree.clone();
    for e in edits {
        if let Edit::Substitute(w) = &e.edit {
            let form = match_case(&tree.token(e.token).form, w);
            tree.set_form(e.token, form);
        }
    }
    let mut cur: Vec<usize> = (0..=tree.len()).collect();
    for e in edits.iter().filter(|e| e.edit == Edit::Negate) {
        let o = cur[e.token];
        let at = negation_position(&tree, o);
        let neg = InsertToken {
            form: lex.negations.primary().to_string(),
            lemma: None,
            upos: "PART".into(),
            head: HeadRef::Existing(o),
            label: "advmod".into(),
        };
        let (next, remap) = tree.insert(at, &[neg])?;
        tree = next;
        for c in cur.iter_mut() {
            *c = remap[*c];
        }
    }
    Ok((tree, cur))
}

/// Sentiment-modified variants of one instance. Every located opinion is
/// replaced simultaneously: by a synonym (same polarity), an antonym, or a
/// negated form (flipped polarity). A sample's confidence is the lowest
/// modification confidence among its edits; samples below `theta_a` are
/// dropped.
pub fn gen_sentiment_mod(
    inst: &AbsaInstance,
    lex: &Lexicons,
    theta_a: f64,
) -> Vec<SyntheticSample> {
    let cfg = SentimentModConfig {
        theta_a,
        ..Default::default()
    };
    gen_sentiment_mod_with(inst, lex, &cfg, &mut SentimentModStats::default())
}

pub fn gen_sentiment_mod_with(
    inst: &AbsaInstance,
    lex: &Lexicons,
    cfg: &SentimentModConfig,
    stats: &mut SentimentModStats,
) -> Vec<SyntheticSample> {
    let links = locate_opinions(inst);
    if links.is_empty() {
        stats.no_opinion += 1;
        return Vec::new();
    }
    let options: Vec<Vec<LinkOption>> = links
        .iter()
        .map(|l| link_options(inst, l, lex, stats))
        .filter(|o| !o.is_empty())
        .collect();
    if options.is_empty() {
        return Vec::new();
    }
    let source = inst.label;
    let mut targets = vec![source];
    targets.extend(Polarity::ALL.into_iter().filter(|&p| p != source));
    let mut out = Vec::new();
    for target in targets {
        let per_link: Vec<Vec<&LinkOption>> = options
            .iter()
            .map(|os| os.iter().filter(|o| o.target == target).collect())
            .collect();
        if per_link.iter().any(Vec::is_empty) {
            continue;
        }
        let mut idx = vec![0usize; per_link.len()];
        for _ in 0..cfg.max_combinations {
            let combo: Vec<&LinkOption> = idx.iter().zip(&per_link).map(|(&i, os)| os[i]).collect();
            let confidence = combo
                .iter()
                .map(|o| o.confidence)
                .fold(f64::INFINITY, f64::min);
            if confidence >= cfg.theta_a {
                match apply(inst, &combo, lex) {
                    Ok((tree, remap)) => {
                        let mut new = AbsaInstance::new(
                            String::new(),
                            tree,
                            inst.aspect.remapped(&remap),
                            target,
                        );
                        new.gold_opinion = Some(combo.iter().map(|o| remap[o.token]).collect());
                        let mut s = SyntheticSample::new(
                            inst,
                            SyntheticKind::SentimentMod,
                            new,
                            confidence,
                        );
                        s.flip = target != source;
                        out.push(s);
                    }
                    Err(e) => log::warn!("{}: modification skipped: {e}", inst.id),
                }
            } else {
                stats.below_threshold += 1;
            }
            // Odometer increment, last link fastest.
            let mut k = per_link.len();
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < per_link[k].len() {
                    break;
                }
                idx[k] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AspectSpan, Token};
    use crate::lexicon::{NegationList, RelationLexicon, SentimentLexicon};

    fn lexicons() -> Lexicons {
        Lexicons {
            sentiment: SentimentLexicon::parse(
                "fabulous\tADJ\t0.875\t0.125\t0.0\nawful\tADJ\t0.0\t0.125\t0.875\n\
                 great\tADJ\t0.75\t0.25\t0.0\ntry\tVERB\t0.25\t0.75\t0.0\n",
            )
            .unwrap(),
            relations: RelationLexicon::parse(
                "fabulous\tADJ\tantonym\tawful\nfabulous\tADJ\tsynonym\tgreat\nfabulous\tADJ\tsynonym\tfab\n",
            )
            .unwrap(),
            negations: NegationList::default(),
        }
    }

    fn tree(words: &[(&str, &str, usize, &str)]) -> DepTree {
        let tokens = words
            .iter()
            .enumerate()
            .map(|(i, (f, u, _, _))| Token::new(i + 1, *f, *u))
            .collect();
        let arcs: Vec<(usize, usize, &str)> = words
            .iter()
            .enumerate()
            .map(|(i, (_, _, h, l))| (*h, i + 1, *l))
            .collect();
        DepTree::from_arcs(tokens, &arcs).unwrap()
    }

    fn food_is_fabulous() -> AbsaInstance {
        let t = tree(&[
            ("The", "DET", 2, "det"),
            ("food", "NOUN", 4, "nsubj"),
            ("is", "AUX", 4, "cop"),
            ("fabulous", "ADJ", 0, "root"),
        ]);
        AbsaInstance::new(
            "r1",
            t,
            AspectSpan::new(2, 3, 4).unwrap(),
            Polarity::Positive,
        )
    }

    #[test]
    fn antonym_flips_label() {
        let out = gen_sentiment_mod(&food_is_fabulous(), &lexicons(), 0.2);
        let flipped: Vec<_> = out.iter().filter(|s| s.flip).collect();
        assert_eq!(flipped.len(), 1);
        assert_eq!(flipped[0].instance.tree.text(), "The food is awful");
        assert_eq!(flipped[0].instance.label, Polarity::Negative);
        assert!((flipped[0].confidence - 0.875 * 2.0 * 0.875 / 0.125).abs() < 1e-12);
    }

    #[test]
    fn synonym_keeps_label_and_skips_unknown_candidates() {
        let out = gen_sentiment_mod(&food_is_fabulous(), &lexicons(), 0.2);
        let same: Vec<_> = out.iter().filter(|s| !s.flip).collect();
        assert_eq!(same.len(), 1);
        assert_eq!(same[0].instance.tree.text(), "The food is great");
        assert_eq!(same[0].instance.label, Polarity::Positive);
        assert!(!same[0].needs_reparse);
    }

    #[test]
    fn neutral_dobj_is_negated() {
        let t = tree(&[
            ("I", "PRON", 3, "nsubj"),
            ("will", "AUX", 3, "aux"),
            ("try", "VERB", 0, "root"),
            ("this", "DET", 5, "det"),
            ("restaurant", "NOUN", 3, "obj"),
            ("next", "ADJ", 7, "amod"),
            ("time", "NOUN", 3, "obl:tmod"),
            (".", "PUNCT", 3, "punct"),
        ]);
        let inst = AbsaInstance::new(
            "r2",
            t,
            AspectSpan::new(5, 6, 8).unwrap(),
            Polarity::Neutral,
        );
        let out = gen_sentiment_mod(&inst, &lexicons(), 0.2);
        assert_eq!(out.len(), 1);
        let s = &out[0];
        assert_eq!(
            s.instance.tree.text(),
            "I will not try this restaurant next time ."
        );
        assert_eq!(s.instance.label, Polarity::Negative);
        assert_eq!(s.instance.aspect_forms(), ["restaurant"]);
        assert!(s.flip);
    }

    #[test]
    fn copular_negation_follows_the_copula() {
        let mut lex = lexicons();
        lex.relations = RelationLexicon::default();
        let out = gen_sentiment_mod(&food_is_fabulous(), &lex, 0.2);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].instance.tree.text(), "The food is not fabulous");
    }

    #[test]
    fn infinite_threshold_emits_nothing() {
        assert!(gen_sentiment_mod(&food_is_fabulous(), &lexicons(), f64::INFINITY).is_empty());
    }
}
