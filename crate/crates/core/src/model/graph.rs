use crate::corpus::{DepTree, LabelInventory};

use super::{ModelError, Result};

pub const NONE_LABEL: usize = 0;
pub const SELF_LABEL: usize = 1;

/// Size of the relation-embedding table: "none", "self", and one id per
/// direction of every inventory label.
pub fn label_table_size(labels: &LabelInventory) -> usize {
    2 + 2 * labels.len()
}

/// Id of relation `k` seen from the head (`toward_dependent`) or from the
/// dependent.
pub fn relation_id(k: usize, toward_dependent: bool) -> usize {
    2 + 2 * k + usize::from(!toward_dependent)
}

/// Symmetric adjacency with self-loops plus directed relation ids, both
/// row-major `n × n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntaxGraph {
    pub n: usize,
    pub adjacency: Vec<bool>,
    pub labels: Vec<usize>,
}

impl SyntaxGraph {
    /// Arcs to the artificial root are dropped.
    pub fn from_tree(tree: &DepTree, inventory: &LabelInventory) -> Result<Self> {
        let n = tree.len();
        let mut g = Self {
            n,
            adjacency: vec![false; n * n],
            labels: vec![NONE_LABEL; n * n],
        };
        for i in 0..n {
            g.adjacency[i * n + i] = true;
            g.labels[i * n + i] = SELF_LABEL;
        }
        for arc in tree.arcs() {
            if arc.head == 0 {
                continue;
            }
            let k = inventory
                .id(&arc.label)
                .ok_or_else(|| ModelError::UnknownLabel(arc.label.clone()))?;
            let (h, d) = (arc.head - 1, arc.dependent - 1);
            g.adjacency[h * n + d] = true;
            g.adjacency[d * n + h] = true;
            g.labels[h * n + d] = relation_id(k, true);
            g.labels[d * n + h] = relation_id(k, false);
        }
        Ok(g)
    }

    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn label(&self, i: usize, j: usize) -> usize {
        self.labels[i * self.n + j]
    }
}
