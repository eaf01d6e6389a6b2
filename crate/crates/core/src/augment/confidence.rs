use crate::corpus::Polarity;
use crate::lexicon::SentimentScores;

use super::{AugmentError, Result};

/// Likelihood that replacing the source opinion by a candidate moves the
/// aspect to `target`:
///
/// `a(O^s, C_s) · 2·a(O^t, C_t) / Σ_{C_e ≠ C_t} a(O^t, C_e)`
///
/// The value is not bounded above.
pub fn modification_confidence(
    src_score: f64,
    tgt: &SentimentScores,
    target: Polarity,
) -> Result<f64> {
    let rest: f64 = Polarity::ALL
        .iter()
        .filter(|&&p| p != target)
        .map(|&p| tgt.get(p))
        .sum();
    if rest <= 0.0 {
        return Err(AugmentError::UndefinedConfidence);
    }
    Ok(src_score * 2.0 * tgt.get(target) / rest)
}

/// Relevance `φ = (1 + cos(u, v)) / 2` of two aspect embeddings.
pub fn aspect_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(AugmentError::Dimension {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(AugmentError::ZeroEmbedding);
    }
    let cos = (dot / (nu * nv)).clamp(-1.0, 1.0);
    Ok((1.0 + cos) / 2.0)
}

/// Strictly above the threshold, with means that differ from it only by
/// rounding (0.9 and 0.8 average to 0.8500000000000001) counted as equal.
pub fn addition_retained(p_m: f64, theta_m: f64) -> bool {
    p_m - theta_m > 1e-12
}

/// Mean relevance between the target aspect and the added ones.
pub fn addition_confidence(phis: &[f64]) -> f64 {
    if phis.is_empty() {
        return 0.0;
    }
    phis.iter().sum::<f64>() / phis.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modification_examples() {
        let tgt = SentimentScores::new(0.1, 0.2, 0.7);
        let c = modification_confidence(0.8, &tgt, Polarity::Negative).unwrap();
        assert!((c - 0.8 * 1.4 / 0.3).abs() < 1e-12);
        assert_eq!(
            modification_confidence(0.0, &tgt, Polarity::Positive).unwrap(),
            0.0
        );
        let tgt = SentimentScores::new(0.5, 0.25, 0.25);
        assert!(
            (modification_confidence(0.5, &tgt, Polarity::Positive).unwrap() - 1.0).abs() < 1e-12
        );
    }

    #[test]
    fn zero_rest_mass_is_undefined() {
        let tgt = SentimentScores::new(1.0, 0.0, 0.0);
        assert!(matches!(
            modification_confidence(0.5, &tgt, Polarity::Positive),
            Err(AugmentError::UndefinedConfidence)
        ));
    }

    #[test]
    fn similarity_examples() {
        assert!((aspect_similarity(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.9).abs() < 1e-12);
        assert!((aspect_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!((aspect_similarity(&[0.3, 0.4], &[0.3, 0.4]).unwrap() - 1.0).abs() < 1e-12);
        assert!(aspect_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(aspect_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn addition_mean() {
        assert!((addition_confidence(&[0.9, 0.8]) - 0.85).abs() < 1e-12);
        assert_eq!(addition_confidence(&[1.0]), 1.0);
    }
}
