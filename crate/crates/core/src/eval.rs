//! Accuracy, per-subset robustness, and how much aggregation weight lands on
//! the gold opinion words.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::{AbsaInstance, Polarity};
use crate::model::{Model, ModelError, Prediction, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TagStats {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Faithfulness {
    pub instances: usize,
    pub mean_deviation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[gold][predicted]` in `Polarity::ALL` order.
    pub confusion: [[usize; 3]; 3],
    pub per_tag: BTreeMap<String, TagStats>,
    /// Present when at least one instance has a non-empty gold opinion.
    pub faithfulness: Option<Faithfulness>,
}

/// `1 − Σ_{i ∈ gold} β_i` over 1-based token indices; `None` for an empty
/// gold set.
pub fn faithfulness_deviation(beta: &[f64], gold: &BTreeSet<usize>) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let mass: f64 = gold
        .iter()
        .filter_map(|&i| beta.get(i.wrapping_sub(1)))
        .sum();
    Some((1.0 - mass).clamp(0.0, 1.0))
}

/// Count a report from predictions aligned with `corpus`.
pub fn report_from_predictions(corpus: &[AbsaInstance], predictions: &[Prediction]) -> EvalReport {
    let mut r = EvalReport::default();
    let mut dev_sum = 0.0;
    let mut dev_n = 0;
    for (inst, p) in corpus.iter().zip(predictions) {
        let gold = inst.label.index();
        let pred = p.label.index();
        let ok = gold == pred;
        r.total += 1;
        r.correct += usize::from(ok);
        r.confusion[gold][pred] += 1;
        for tag in &inst.subset_tags {
            let t = r.per_tag.entry(tag.clone()).or_default();
            t.total += 1;
            t.correct += usize::from(ok);
        }
        if let Some(d) = inst
            .gold_opinion
            .as_ref()
            .and_then(|g| faithfulness_deviation(&p.beta, g))
        {
            dev_sum += d;
            dev_n += 1;
        }
    }
    r.accuracy = ratio(r.correct, r.total);
    for t in r.per_tag.values_mut() {
        t.accuracy = ratio(t.correct, t.total);
    }
    if dev_n > 0 {
        r.faithfulness = Some(Faithfulness {
            instances: dev_n,
            mean_deviation: dev_sum / dev_n as f64,
        });
    }
    r
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn evaluate(model: &Model, corpus: &[AbsaInstance]) -> Result<EvalReport> {
    let preds = corpus
        .iter()
        .map(|i| model.predict(i))
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from_predictions(corpus, &preds))
}

impl EvalReport {
    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "overall   {:>6.2}%  ({}/{})",
            100.0 * self.accuracy,
            self.correct,
            self.total
        );
        if !self.per_tag.is_empty() {
            let w = self
                .per_tag
                .keys()
                .map(String::len)
                .max()
                .unwrap_or(0)
                .max(3);
            let _ = writeln!(s, "\n{:<w$}  {:>8}  {:>9}", "tag", "accuracy", "count");
            for (tag, t) in &self.per_tag {
                let _ = writeln!(
                    s,
                    "{:<w$}  {:>7.2}%  {:>4}/{:<4}",
                    tag,
                    100.0 * t.accuracy,
                    t.correct,
                    t.total
                );
            }
        }
        let _ = writeln!(s, "\nconfusion (rows gold, columns predicted)");
        let _ = write!(s, "{:<10}", "");
        for p in Polarity::ALL {
            let _ = write!(s, "{:>10}", p.as_str());
        }
        s.push('\n');
        for g in Polarity::ALL {
            let _ = write!(s, "{:<10}", g.as_str());
            for p in Polarity::ALL {
                let _ = write!(s, "{:>10}", self.confusion[g.index()][p.index()]);
            }
            s.push('\n');
        }
        if let Some(f) = &self.faithfulness {
            let _ = writeln!(
                s,
                "\nfaithfulness deviation {:.4} over {} instances",
                f.mean_deviation, f.instances
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    RF,
    RS,
    RAdv,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::RF => "r_f",
            Representation::RS => "r_s",
            Representation::RAdv => "r_adv",
        }
    }

    pub fn dim(self, model: &Model) -> usize {
        match self {
            Representation::RF => model.config.d_feature(),
            Representation::RS => model.config.d_syntax(),
            Representation::RAdv => model.config.d_adv(),
        }
    }

    fn pick(self, p: &Prediction) -> &[f64] {
        match self {
            Representation::RF => &p.r_f,
            Representation::RS => &p.r_s,
            Representation::RAdv => &p.r_adv,
        }
    }
}

impl FromStr for Representation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "r_f" | "rf" => Ok(Representation::RF),
            "r_s" | "rs" => Ok(Representation::RS),
            "r_adv" | "radv" => Ok(Representation::RAdv),
            _ => Err(ModelError::Config(format!(
                "unknown representation {s:?} (r_f, r_s or r_adv)"
            ))),
        }
    }
}

/// TSV of id, gold, predicted and the vector components, with a header.
pub fn dump_representations(
    model: &Model,
    corpus: &[AbsaInstance],
    which: Representation,
    out: &mut dyn Write,
) -> Result<()> {
    let dim = which.dim(model);
    let mut header = String::from("id\tgold\tpredicted");
    for k in 0..dim {
        let _ = write!(header, "\t{}{k}", which.as_str());
    }
    writeln!(out, "{header}")?;
    for inst in corpus {
        let p = model.predict(inst)?;
        let mut line = format!("{}\t{}\t{}", inst.id, inst.label.as_str(), p.label.as_str());
        for v in which.pick(&p) {
            let _ = write!(line, "\t{v}");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
