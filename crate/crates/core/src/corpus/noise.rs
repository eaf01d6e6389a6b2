use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DepTree, LabelInventory};

/// Simulate a weaker parser: `round(rate · n)` tokens, chosen by `seed`, get
/// a new head drawn uniformly from the heads that keep the tree valid and a
/// new label different from the old one. The root token keeps head 0 and is
/// only relabeled. Exactly that many arcs differ from the input.
pub fn inject_parse_noise(
    tree: &DepTree,
    rate: f64,
    seed: u64,
    labels: &LabelInventory,
) -> DepTree {
    assert!(
        (0.0..=1.0).contains(&rate),
        "noise rate {rate} outside [0, 1]"
    );
    let n = tree.len();
    let k = (rate * n as f64).round() as usize;
    let mut out = tree.clone();
    if k == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(&mut rng);
    for &t in &order[..k] {
        let old_label = out.label(t).to_string();
        let choices: Vec<&String> = labels
            .labels()
            .iter()
            .filter(|l| **l != old_label && (out.head(t) == 0 || *l != "root"))
            .collect();
        let label = if choices.is_empty() {
            format!("{old_label}_x")
        } else {
            choices[rng.gen_range(0..choices.len())].clone()
        };
        let head = if out.head(t) == 0 {
            0
        } else {
            let heads: Vec<usize> = (1..=n)
                .filter(|&h| h != t && !out.is_ancestor(t, h))
                .collect();
            heads[rng.gen_range(0..heads.len())]
        };
        out.set_arc(t, head, label)
            .expect("re-pointing outside the subtree keeps the tree valid");
    }
    out
}
