use std::collections::BTreeSet;

use crate::corpus::{AbsaInstance, AspectSpan, DepTree, HeadRef, InsertToken, Token};
use crate::lexicon::Relation;

use super::meteor::meteor;
use super::opinion::locate_opinions;
use super::paraphrase::Paraphraser;
use super::sample::{SyntheticKind, SyntheticSample};
use super::Lexicons;

/// Context edits that leave content words alone; each can be switched off.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceEdits {
    pub tense: bool,
    pub pronoun: bool,
    pub quantifier: bool,
    pub punctuation: bool,
}

impl Default for SurfaceEdits {
    fn default() -> Self {
        Self {
            tense: true,
            pronoun: true,
            quantifier: true,
            punctuation: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundConfig {
    pub theta_n: f64,
    pub surface: SurfaceEdits,
    pub substitution: bool,
    pub paraphrase: bool,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            theta_n: 0.25,
            surface: SurfaceEdits::default(),
            substitution: true,
            paraphrase: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct BackgroundStats {
    pub paraphrase_failures: usize,
    pub aspect_lost: usize,
    pub opinion_dropped: usize,
    pub below_threshold: usize,
    /// Rewrites identical to the source or to an earlier rewrite.
    pub duplicates: usize,
}

const TENSE: &[(&str, &str)] = &[
    ("is", "was"),
    ("am", "was"),
    ("are", "were"),
    ("has", "had"),
    ("have", "had"),
    ("do", "did"),
    ("does", "did"),
];
const PRONOUNS: &[(&str, &str)] = &[("he", "she"), ("she", "he")];
const QUANTIFIERS: &[(&str, &str)] = &[
    ("many", "several"),
    ("several", "many"),
    ("every", "each"),
    ("each", "every"),
];
const EXPRESSION_LABELS: &[&str] = &["advmod", "compound", "fixed", "flat", "neg"];

fn match_case(template: &str, word: &str) -> String {
    let mut chars = word.chars();
    match (template.chars().next(), chars.next()) {
        (Some(t), Some(c)) if t.is_uppercase() => c.to_uppercase().chain(chars).collect(),
        _ => word.to_string(),
    }
}

fn lookup_table(table: &[(&str, &str)], word: &str) -> Option<String> {
    let lw = word.to_lowercase();
    table
        .iter()
        .find(|(a, _)| *a == lw)
        .map(|(_, b)| match_case(word, b))
}

fn find<S: AsRef<str>, T: AsRef<str>>(hay: &[S], needle: &[T]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (0..=hay.len() - needle.len()).find(|&i| {
        hay[i..i + needle.len()]
            .iter()
            .zip(needle)
            .all(|(a, b)| a.as_ref() == b.as_ref())
    })
}

/// Contiguous opinion expressions (head plus adjacent modifiers), as the
/// head and its token index run.
fn opinion_expressions(inst: &AbsaInstance, lex: &Lexicons) -> Vec<(usize, Vec<usize>)> {
    let tree = &inst.tree;
    let mut out = Vec::new();
    for link in locate_opinions(inst) {
        let o = link.head();
        let members: BTreeSet<usize> = std::iter::once(o)
            .chain(tree.children(o).filter(|&c| {
                EXPRESSION_LABELS.contains(&tree.base_label(c))
                    || lex.negations.contains(&tree.token(c).form)
            }))
            .filter(|t| !inst.aspect.contains(*t))
            .collect();
        let (mut lo, mut hi) = (o, o);
        while lo > 1 && members.contains(&(lo - 1)) {
            lo -= 1;
        }
        while members.contains(&(hi + 1)) {
            hi += 1;
        }
        let expr = (o, (lo..=hi).collect());
        if !out.contains(&expr) {
            out.push(expr);
        }
    }
    out
}

fn protected(inst: &AbsaInstance, expressions: &[(usize, Vec<usize>)]) -> BTreeSet<usize> {
    let mut p: BTreeSet<usize> = inst.aspect.indices().collect();
    p.extend(expressions.iter().flat_map(|(_, run)| run.iter().copied()));
    if let Some(g) = &inst.gold_opinion {
        p.extend(g.iter().copied());
    }
    p
}

fn substitute_all(
    inst: &AbsaInstance,
    protect: &BTreeSet<usize>,
    mut pick: impl FnMut(&Token) -> Option<String>,
) -> Option<DepTree> {
    let mut tree = inst.tree.clone();
    let mut changed = false;
    for i in 1..=tree.len() {
        if protect.contains(&i) {
            continue;
        }
        if let Some(w) = pick(tree.token(i)) {
            if w != tree.token(i).form {
                tree.set_form(i, w);
                changed = true;
            }
        }
    }
    changed.then_some(tree)
}

fn punctuation_edit(
    inst: &AbsaInstance,
    protect: &BTreeSet<usize>,
) -> Option<(DepTree, AspectSpan)> {
    let tree = &inst.tree;
    let n = tree.len();
    let last = tree.token(n);
    if last.form == "." && !protect.contains(&n) {
        let mut t = tree.clone();
        t.set_form(n, "!");
        return Some((t, inst.aspect));
    }
    if last.upos == "PUNCT" {
        return None;
    }
    let bang = InsertToken {
        form: "!".into(),
        lemma: None,
        upos: "PUNCT".into(),
        head: HeadRef::Existing(tree.root()),
        label: "punct".into(),
    };
    let (t, remap) = tree.insert(n + 1, &[bang]).ok()?;
    Some((t, inst.aspect.remapped(&remap)))
}

/// Whitespace-tokenized sentence with every opinion expression restored;
/// `None` when an expression vanished without a lexicon-backed counterpart.
fn restore_opinions(
    inst: &AbsaInstance,
    lex: &Lexicons,
    expressions: &[(usize, Vec<usize>)],
    mut out: Vec<String>,
) -> Option<Vec<String>> {
    let tree = &inst.tree;
    let aspect = inst.aspect_forms();
    let original: BTreeSet<String> = tree.forms().iter().map(|w| w.to_lowercase()).collect();
    for (head, expr) in expressions {
        let forms: Vec<String> = expr.iter().map(|&i| tree.token(i).form.clone()).collect();
        if find(&out, &forms).is_some() {
            continue;
        }
        let asp_at = find(&out, &aspect);
        let outside = |k: usize| asp_at.is_none_or(|a| k < a || k >= a + aspect.len());
        // Longest surviving sub-run of the expression.
        let mut spliced = false;
        'len: for len in (1..forms.len()).rev() {
            for s in 0..=forms.len() - len {
                let part = &forms[s..s + len];
                let hit = (0..=out.len().saturating_sub(len))
                    .filter(|&k| k + len <= out.len() && (k..k + len).all(outside))
                    .find(|&k| out[k..k + len] == *part);
                if let Some(k) = hit {
                    // The neighbours standing where the rest of the
                    // expression was are taken as its replacement.
                    let rest = forms.len() - s - len;
                    let lo = if k >= s && (k - s..k).all(outside) {
                        k - s
                    } else {
                        k
                    };
                    let hi =
                        if k + len + rest <= out.len() && (k + len..k + len + rest).all(outside) {
                            k + len + rest
                        } else {
                            k + len
                        };
                    out.splice(lo..hi, forms.iter().cloned());
                    spliced = true;
                    break 'len;
                }
            }
        }
        if spliced {
            continue;
        }
        // Fully replaced: look for the word that took the opinion's place.
        let head = tree.token(*head);
        let orig = lex.sentiment.lookup(&head.form, &head.upos)?;
        let mut best: Option<(usize, f64)> = None;
        for (k, w) in out.iter().enumerate() {
            if !outside(k) || original.contains(&w.to_lowercase()) {
                continue;
            }
            if let Some(s) = lex.sentiment.lookup(w, &head.upos) {
                let agree = orig.agreement(&s);
                if best.is_none_or(|(_, b)| agree > b) {
                    best = Some((k, agree));
                }
            }
        }
        match best {
            Some((k, agree)) if agree > 0.5 => {
                out.splice(k..k + 1, forms.iter().cloned());
            }
            _ => return None,
        }
    }
    Some(out)
}

/// A flat provisional parse: every token hangs off one root with `dep`.
fn flat_tree(words: &[String], source: &DepTree, root: usize) -> Option<DepTree> {
    let tokens = words
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let upos = source
                .tokens()
                .iter()
                .find(|t| t.form == *w)
                .map_or("X".to_string(), |t| t.upos.clone());
            Token::new(k + 1, w.clone(), upos)
        })
        .collect();
    let heads = (1..=words.len())
        .map(|i| if i == root { 0 } else { root })
        .collect();
    let labels = (1..=words.len())
        .map(|i| if i == root { "root" } else { "dep" }.to_string())
        .collect();
    DepTree::new(tokens, heads, labels).ok()
}

/// Background rewrites of one instance: surface edits, substitution of
/// neutral words, and a paraphrase with the aspect pinned. Each sample's
/// confidence is its METEOR score against the source; samples below
/// `theta_n` are dropped.
pub fn rewrite_background(
    inst: &AbsaInstance,
    lex: &Lexicons,
    theta_n: f64,
    paraphraser: &dyn Paraphraser,
) -> Vec<SyntheticSample> {
    let cfg = BackgroundConfig {
        theta_n,
        ..Default::default()
    };
    rewrite_background_with(
        inst,
        lex,
        &cfg,
        paraphraser,
        &mut BackgroundStats::default(),
    )
}

pub fn rewrite_background_with(
    inst: &AbsaInstance,
    lex: &Lexicons,
    cfg: &BackgroundConfig,
    paraphraser: &dyn Paraphraser,
    stats: &mut BackgroundStats,
) -> Vec<SyntheticSample> {
    let expressions = opinion_expressions(inst, lex);
    let protect = protected(inst, &expressions);
    let reference = inst.tree.forms();
    let mut candidates: Vec<(DepTree, AspectSpan, bool)> = Vec::new();

    let surface = &cfg.surface;
    if surface.tense {
        let t = substitute_all(inst, &protect, |tok| {
            matches!(tok.upos.as_str(), "AUX" | "VERB")
                .then(|| lookup_table(TENSE, &tok.form))
                .flatten()
        });
        candidates.extend(t.map(|t| (t, inst.aspect, false)));
    }
    if surface.pronoun {
        let pronouns = inst
            .tree
            .tokens()
            .iter()
            .filter(|t| t.upos == "PRON")
            .count();
        if pronouns <= 1 {
            let t = substitute_all(inst, &protect, |tok| lookup_table(PRONOUNS, &tok.form));
            candidates.extend(t.map(|t| (t, inst.aspect, false)));
        }
    }
    if surface.quantifier {
        let t = substitute_all(inst, &protect, |tok| lookup_table(QUANTIFIERS, &tok.form));
        candidates.extend(t.map(|t| (t, inst.aspect, false)));
    }
    if surface.punctuation {
        candidates.extend(punctuation_edit(inst, &protect).map(|(t, a)| (t, a, false)));
    }
    if cfg.substitution {
        let t = substitute_all(inst, &protect, |tok| {
            let scores = lex.sentiment.lookup(&tok.form, &tok.upos)?;
            if !scores.is_neutral_dominant() {
                return None;
            }
            [Relation::Synonym, Relation::Antonym]
                .into_iter()
                .flat_map(|r| lex.relations.candidates_for(&tok.form, &tok.upos, r))
                .find(|c| {
                    lex.sentiment
                        .lookup_exact(c, &tok.upos)
                        .is_some_and(|s| s.is_neutral_dominant())
                })
                .map(|c| match_case(&tok.form, c))
        });
        candidates.extend(t.map(|t| (t, inst.aspect, false)));
    }
    if cfg.paraphrase {
        let aspect = inst.aspect_forms();
        match paraphraser.paraphrase(&inst.tree.text(), &aspect.join(" ")) {
            Err(e) => {
                log::debug!("{}: {e}", inst.id);
                stats.paraphrase_failures += 1;
            }
            Ok(text) => {
                let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
                if find(&words, &aspect).is_none() {
                    stats.aspect_lost += 1;
                } else {
                    match restore_opinions(inst, lex, &expressions, words) {
                        None => stats.opinion_dropped += 1,
                        Some(words) => {
                            let at =
                                find(&words, &aspect).expect("aspect kept outside splices") + 1;
                            let span = AspectSpan::new(at, at + aspect.len(), words.len())
                                .expect("found span");
                            let head_offset = inst.aspect_head() - inst.aspect.start;
                            if let Some(t) = flat_tree(&words, &inst.tree, at + head_offset) {
                                candidates.push((t, span, true));
                            }
                        }
                    }
                }
            }
        }
    }

    let mut out = Vec::new();
    let mut seen = vec![reference.clone()];
    for (tree, aspect, reparse) in candidates {
        let forms = tree.forms();
        if seen.contains(&forms) {
            stats.duplicates += 1;
            continue;
        }
        seen.push(forms);
        let confidence = meteor(&tree.forms(), &reference);
        if confidence < cfg.theta_n {
            stats.below_threshold += 1;
            continue;
        }
        let new = AbsaInstance::new(String::new(), tree, aspect, inst.label);
        let mut s = SyntheticSample::new(inst, SyntheticKind::BackgroundRewrite, new, confidence);
        s.needs_reparse = reparse;
        out.push(s);
    }
    out
}
