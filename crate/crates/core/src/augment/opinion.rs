use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{AbsaInstance, AspectSpan, DepTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpinionRelation {
    Amod,
    Nsubj,
    Dobj,
    Xcomp,
}

impl OpinionRelation {
    pub fn as_str(self) -> &'static str {
        match self {
            OpinionRelation::Amod => "amod",
            OpinionRelation::Nsubj => "nsubj",
            OpinionRelation::Dobj => "dobj",
            OpinionRelation::Xcomp => "xcomp",
        }
    }
}

impl fmt::Display for OpinionRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpinionLink {
    pub aspect: AspectSpan,
    pub opinion: BTreeSet<usize>,
    pub relation: OpinionRelation,
}

impl OpinionLink {
    /// The opinion head: the token that gets substituted or negated.
    pub fn head(&self) -> usize {
        *self
            .opinion
            .iter()
            .next()
            .expect("opinion set is non-empty")
    }
}

fn xcomp_child(tree: &DepTree, v: usize) -> Option<usize> {
    tree.children(v).find(|&c| tree.base_label(c) == "xcomp")
}

/// Explicit opinion expressions of the instance's aspect, found from four
/// dependency patterns around the aspect head:
///
/// * `amod` child of the aspect head ("a reasonable price");
/// * the aspect is the `nsubj` of a predicate ("the room is small");
/// * the aspect is the `obj`/`dobj` of a verb ("I love the smell");
/// * in either of the last two, when the governor has an `xcomp` complement,
///   the complement is the opinion instead ("the beer tastes spicy").
pub fn locate_opinions(inst: &AbsaInstance) -> Vec<OpinionLink> {
    let tree = &inst.tree;
    let h = inst.aspect_head();
    let mut out: Vec<OpinionLink> = Vec::new();
    let mut push = |tok: usize, relation: OpinionRelation| {
        if tok == 0 || inst.aspect.contains(tok) {
            return;
        }
        let link = OpinionLink {
            aspect: inst.aspect,
            opinion: BTreeSet::from([tok]),
            relation,
        };
        if !out.contains(&link) {
            out.push(link);
        }
    };
    for c in tree.children(h) {
        if tree.base_label(c) == "amod" {
            push(c, OpinionRelation::Amod);
        }
    }
    let gov = tree.head(h);
    if gov != 0 {
        let rel = match tree.base_label(h) {
            "nsubj" => Some(OpinionRelation::Nsubj),
            "obj" | "dobj" => Some(OpinionRelation::Dobj),
            _ => None,
        };
        if let Some(rel) = rel {
            match xcomp_child(tree, gov) {
                Some(c) => push(c, OpinionRelation::Xcomp),
                None => push(gov, rel),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Polarity, Token};

    fn inst(words: &[(&str, &str, usize, &str)], aspect: (usize, usize)) -> AbsaInstance {
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
        let tree = DepTree::from_arcs(tokens, &arcs).unwrap();
        let span = AspectSpan::new(aspect.0, aspect.1, tree.len()).unwrap();
        AbsaInstance::new("t", tree, span, Polarity::Positive)
    }

    fn only(links: &[OpinionLink]) -> (Vec<usize>, OpinionRelation) {
        assert_eq!(links.len(), 1, "{links:?}");
        (
            links[0].opinion.iter().copied().collect(),
            links[0].relation,
        )
    }

    #[test]
    fn reasonable_price() {
        let i = inst(
            &[
                ("a", "DET", 3, "det"),
                ("reasonable", "ADJ", 3, "amod"),
                ("price", "NOUN", 0, "root"),
            ],
            (3, 4),
        );
        assert_eq!(only(&locate_opinions(&i)), (vec![2], OpinionRelation::Amod));
    }

    #[test]
    fn room_is_small() {
        let i = inst(
            &[
                ("the", "DET", 2, "det"),
                ("room", "NOUN", 4, "nsubj"),
                ("is", "AUX", 4, "cop"),
                ("small", "ADJ", 0, "root"),
            ],
            (2, 3),
        );
        assert_eq!(
            only(&locate_opinions(&i)),
            (vec![4], OpinionRelation::Nsubj)
        );
    }

    #[test]
    fn love_the_smell() {
        let i = inst(
            &[
                ("I", "PRON", 2, "nsubj"),
                ("love", "VERB", 0, "root"),
                ("the", "DET", 4, "det"),
                ("smell", "NOUN", 2, "obj"),
            ],
            (4, 5),
        );
        assert_eq!(only(&locate_opinions(&i)), (vec![2], OpinionRelation::Dobj));
    }

    #[test]
    fn beer_tastes_spicy() {
        let i = inst(
            &[
                ("The", "DET", 2, "det"),
                ("beer", "NOUN", 3, "nsubj"),
                ("tastes", "VERB", 0, "root"),
                ("spicy", "ADJ", 3, "xcomp"),
            ],
            (2, 3),
        );
        assert_eq!(
            only(&locate_opinions(&i)),
            (vec![4], OpinionRelation::Xcomp)
        );
    }

    #[test]
    fn no_rule_fires() {
        let i = inst(
            &[("food", "NOUN", 0, "root"), ("!", "PUNCT", 1, "punct")],
            (1, 2),
        );
        assert!(locate_opinions(&i).is_empty());
    }

    #[test]
    fn amod_and_nsubj_together() {
        let i = inst(
            &[
                ("the", "DET", 3, "det"),
                ("cheap", "ADJ", 3, "amod"),
                ("wine", "NOUN", 5, "nsubj"),
                ("is", "AUX", 5, "cop"),
                ("great", "ADJ", 0, "root"),
            ],
            (3, 4),
        );
        let links = locate_opinions(&i);
        assert_eq!(links.len(), 2);
        assert_eq!(links[0].relation, OpinionRelation::Amod);
        assert_eq!(links[1].head(), 5);
    }
}
