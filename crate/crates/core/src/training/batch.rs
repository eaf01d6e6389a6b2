use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{SyntheticKind, SyntheticSample};
use crate::corpus::AbsaInstance;

use super::{Result, TrainError};

/// Synthetic samples grouped by source instance and kind.
#[derive(Clone, Debug, Default)]
pub struct Families {
    /// Indexed by raw position, then by kind index; values index the
    /// synthetic slice.
    members: Vec<[Vec<usize>; 3]>,
}

impl Families {
    /// Every synthetic sample must name a raw instance as its source.
    pub fn build(raw: &[AbsaInstance], synthetic: &[SyntheticSample]) -> Result<Self> {
        let index: HashMap<&str, usize> = raw
            .iter()
            .enumerate()
            .map(|(k, r)| (r.id.as_str(), k))
            .collect();
        let mut members = vec![<[Vec<usize>; 3]>::default(); raw.len()];
        for (s, sample) in synthetic.iter().enumerate() {
            let &k = index
                .get(sample.source_id.as_str())
                .ok_or_else(|| TrainError::UnresolvedSource(sample.source_id.clone()))?;
            members[k][sample.kind.index()].push(s);
        }
        Ok(Self { members })
    }

    pub fn of(&self, raw: usize, kind: SyntheticKind) -> &[usize] {
        &self.members[raw][kind.index()]
    }

    pub fn has_any(&self, raw: usize) -> bool {
        self.members[raw].iter().any(|m| !m.is_empty())
    }
}

/// Positives and negatives of one raw anchor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContrastiveSet {
    pub anchor: usize,
    /// Sentiment-modified samples keeping the anchor's polarity.
    pub positives: Vec<usize>,
    /// Sentiment-modified samples with another polarity.
    pub intra_negatives: Vec<usize>,
    /// Aspect-addition samples.
    pub inter_negatives: Vec<usize>,
}

/// One optimization step's worth of indices into the raw and synthetic
/// corpora.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BatchPlan {
    pub raw: Vec<usize>,
    /// `(raw, synthetic)` pairs for the adversarial objective.
    pub pairs: Vec<(usize, usize)>,
    pub contrast: Vec<ContrastiveSet>,
    /// Anchors dropped per scheme for lack of positives or negatives.
    pub skipped: [usize; 4],
}

impl BatchPlan {
    /// Distinct synthetic indices the plan touches, sorted.
    pub fn synthetic(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pairs.iter().map(|&(_, s)| s).collect();
        for c in &self.contrast {
            v.extend(&c.positives);
            v.extend(&c.intra_negatives);
            v.extend(&c.inter_negatives);
        }
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub struct Planner<'a> {
    pub raw: &'a [AbsaInstance],
    pub synthetic: &'a [SyntheticSample],
    pub families: &'a Families,
    pub adversarial: bool,
    pub contrastive: bool,
    pub positives: usize,
    pub negatives: usize,
}

fn sample(pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v: Vec<usize> = pool
        .choose_multiple(rng, k.min(pool.len()))
        .copied()
        .collect();
    v.sort_unstable();
    v
}

impl Planner<'_> {
    pub fn plan(&self, raw: &[usize], rng: &mut ChaCha8Rng) -> BatchPlan {
        let mut plan = BatchPlan {
            raw: raw.to_vec(),
            ..BatchPlan::default()
        };
        if self.adversarial {
            for &r in raw {
                let kinds: Vec<SyntheticKind> = SyntheticKind::ALL
                    .into_iter()
                    .filter(|&k| !self.families.of(r, k).is_empty())
                    .collect();
                if kinds.is_empty() {
                    continue;
                }
                let kind = kinds[rng.gen_range(0..kinds.len())];
                let pool = self.families.of(r, kind);
                plan.pairs.push((r, pool[rng.gen_range(0..pool.len())]));
            }
        }
        if self.contrastive {
            for &r in raw {
                let label = self.raw[r].label;
                let (same, other): (Vec<usize>, Vec<usize>) = self
                    .families
                    .of(r, SyntheticKind::SentimentMod)
                    .iter()
                    .partition(|&&s| self.synthetic[s].instance.label == label);
                let set = ContrastiveSet {
                    anchor: r,
                    positives: sample(&same, self.positives, rng),
                    intra_negatives: sample(&other, self.negatives, rng),
                    inter_negatives: sample(
                        self.families.of(r, SyntheticKind::AspectAddition),
                        self.negatives,
                        rng,
                    ),
                };
                let ita = !set.positives.is_empty() && !set.intra_negatives.is_empty();
                let itr = !set.positives.is_empty() && !set.inter_negatives.is_empty();
                if !ita {
                    plan.skipped[0] += 1;
                    plan.skipped[1] += 1;
                }
                if !itr {
                    plan.skipped[2] += 1;
                    plan.skipped[3] += 1;
                }
                if ita || itr {
                    plan.contrast.push(set);
                }
            }
        }
        plan
    }
}
