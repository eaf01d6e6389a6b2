use std::fmt;

use rabsa_autodiff::{Tape, Var};

use super::{Result, TrainError};

/// The four contrastive schemes: intra/inter-aspect pairs over the opinion
/// (`r_f`) or structure (`r_s`) representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    ItaO,
    ItaS,
    ItrO,
    ItrS,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::ItaO, Scheme::ItaS, Scheme::ItrO, Scheme::ItrS];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::ItaO => "ita#o",
            Scheme::ItaS => "ita#s",
            Scheme::ItrO => "itr#o",
            Scheme::ItrS => "itr#s",
        }
    }

    pub fn inter(self) -> bool {
        matches!(self, Scheme::ItrO | Scheme::ItrS)
    }

    pub fn structural(self) -> bool {
        matches!(self, Scheme::ItaS | Scheme::ItrS)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sum of per-row cross-entropies.
pub fn ce_sum(tape: &mut Tape, logits: &[Var], targets: &[usize]) -> Result<Var> {
    let rows = tape.concat_rows(logits)?;
    let mean = tape.cross_entropy(rows, targets)?;
    Ok(tape.scale(mean, targets.len() as f64)?)
}

/// `[a; b; a − b; a ⊙ b]`.
pub fn matcher(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (da, db) = (
        tape.value(a).shape().to_vec(),
        tape.value(b).shape().to_vec(),
    );
    if da != db {
        return Err(TrainError::Structure(format!(
            "matcher inputs differ: {da:?} vs {db:?}"
        )));
    }
    let diff = tape.sub(a, b)?;
    let prod = tape.mul(a, b)?;
    Ok(tape.concat_cols(&[a, b, diff, prod])?)
}

/// `−Σ_j log( exp(s⁺_j/μ) / Σ_k exp(s⁻_k/μ) )` for one anchor, with cosine
/// similarities to the anchor.
pub fn contrastive_term(
    tape: &mut Tape,
    anchor: Var,
    positives: &[Var],
    negatives: &[Var],
    mu: f64,
) -> Result<Var> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(TrainError::Structure(
            "contrastive anchor needs positives and negatives".into(),
        ));
    }
    let mut neg = Vec::with_capacity(negatives.len());
    for &n in negatives {
        neg.push(tape.cosine_similarity(n, anchor)?);
    }
    let neg = tape.concat_cols(&neg)?;
    let neg = tape.scale(neg, 1.0 / mu)?;
    let lse = tape.log_sum_exp(neg)?;
    let mut pos = Vec::with_capacity(positives.len());
    for &p in positives {
        pos.push(tape.cosine_similarity(p, anchor)?);
    }
    let pos = tape.concat_cols(&pos)?;
    let pos = tape.sum(pos)?;
    let pos = tape.scale(pos, -1.0 / mu)?;
    let lse = tape.scale(lse, positives.len() as f64)?;
    Ok(tape.add(pos, lse)?)
}

/// Plain-number version of [`contrastive_term`] given the similarities.
pub fn contrastive_value(positive_sims: &[f64], negative_sims: &[f64], mu: f64) -> f64 {
    let scaled: Vec<f64> = negative_sims.iter().map(|s| s / mu).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    positive_sims.iter().map(|s| -s / mu + lse).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rabsa_autodiff::Tensor;

    #[test]
    fn contrastive_closed_forms() {
        assert!(contrastive_value(&[1.0], &[1.0], 1.0).abs() < 1e-12);
        assert!((contrastive_value(&[1.0], &[0.0], 1.0) + 1.0).abs() < 1e-12);
        assert!((contrastive_value(&[0.0], &[0.0, 0.0], 1.0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn term_matches_value() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::row(vec![1.0, 0.0])).unwrap();
        let p = t.leaf(Tensor::row(vec![1.0, 1.0])).unwrap();
        let n1 = t.leaf(Tensor::row(vec![0.0, 1.0])).unwrap();
        let n2 = t.leaf(Tensor::row(vec![-1.0, 0.5])).unwrap();
        let v = contrastive_term(&mut t, a, &[p, p], &[n1, n2], 0.1).unwrap();
        let cos = |x: [f64; 2]| x[0] / (x[0] * x[0] + x[1] * x[1]).sqrt();
        let expect = contrastive_value(&[cos([1.0, 1.0]); 2], &[0.0, cos([-1.0, 0.5])], 0.1);
        assert!((t.scalar(v) - expect).abs() < 1e-12);
    }

    #[test]
    fn matcher_blocks() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::row(vec![1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        let z = t.leaf(Tensor::row(vec![0.0; 5])).unwrap();
        let v = matcher(&mut t, a, z).unwrap();
        let d = t.value(v).data().to_vec();
        assert_eq!(d.len(), 20);
        assert_eq!(&d[10..15], &d[0..5]);
        assert!(d[15..].iter().all(|&x| x == 0.0));
        let same = matcher(&mut t, a, a).unwrap();
        assert!(t.value(same).data()[10..15].iter().all(|&x| x == 0.0));
        let short = t.leaf(Tensor::row(vec![0.0; 4])).unwrap();
        assert!(matcher(&mut t, a, short).is_err());
    }

    #[test]
    fn ce_closed_forms() {
        let mut t = Tape::new();
        let u = t.leaf(Tensor::row(vec![0.0; 3])).unwrap();
        let l = ce_sum(&mut t, &[u, u], &[0, 2]).unwrap();
        assert!((t.scalar(l) - 2.0 * 3f64.ln()).abs() < 1e-12);
        let sharp = t.leaf(Tensor::row(vec![800.0, 0.0, 0.0])).unwrap();
        let l = ce_sum(&mut t, &[sharp], &[0]).unwrap();
        assert!(t.scalar(l).abs() < 1e-12);
    }
}
