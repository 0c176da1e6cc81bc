//! Categorical distributions and the softmax link.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Probability vector over `C` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    probs: Vec<f64>,
}

impl CategoricalDist {
    /// Tolerance on `|sum - 1|` accepted by [`CategoricalDist::new`].
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("distribution"));
        }
        let mut sum = 0.0;
        for (c, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(alloc::format!(
                    "entry {c} = {p} outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(alloc::format!(
                "entries sum to {sum}"
            )));
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!(Self::new(probs.clone()).is_ok());
        Self { probs }
    }

    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0);
        Self {
            probs: alloc::vec![1.0 / classes as f64; classes],
        }
    }

    pub fn one_hot(classes: usize, class: usize) -> Self {
        assert!(class < classes);
        let mut probs = alloc::vec![0.0; classes];
        probs[class] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = c;
            }
        }
        best
    }

    /// Top-label confidence.
    pub fn confidence(&self) -> f64 {
        self.probs[self.argmax()]
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`, clamped to `[0, ln C]`.
    pub fn entropy(&self) -> f64 {
        let h: f64 = -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * libm::log(p))
            .sum::<f64>();
        h.clamp(0.0, libm::log(self.probs.len() as f64))
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<CategoricalDist> {
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    Ok(CategoricalDist::from_normalized(softmax_unchecked(logits)))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// `ln Σ exp(z)`.
pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(z.iter().map(|&v| libm::exp(v - max)).sum::<f64>())
}

/// Class-wise arithmetic mean of equally sized distributions, summed in order.
pub(crate) fn mean_of(dists: &[CategoricalDist]) -> Result<CategoricalDist> {
    let first = dists.first().ok_or(Error::Empty("distribution list"))?;
    let classes = first.num_classes();
    let mut acc = alloc::vec![0.0; classes];
    for d in dists {
        if d.num_classes() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                found: d.num_classes(),
            });
        }
        for (a, p) in acc.iter_mut().zip(&d.probs) {
            *a += p;
        }
    }
    let n = dists.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(CategoricalDist { probs: acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let d = softmax(&[0.0; 5]).unwrap();
        for &p in d.probs() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let d = softmax(&[1000.0, 0.0]).unwrap();
        assert!((d.probs()[0] - 1.0).abs() < 1e-12);
        assert!(d.probs()[1] < 1e-300);
    }

    #[test]
    fn softmax_two_logits() {
        // e^2 / (e^2 + 1) evaluated at high precision
        let d = softmax(&[2.0, 0.0]).unwrap();
        assert!((d.probs()[0] - 0.880797).abs() < 1e-6);
        assert!((d.probs()[1] - 0.119203).abs() < 1e-6);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert_eq!(softmax(&[f64::NAN, 1.0]), Err(Error::NonFinite("logits")));
        assert!(softmax(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        let d = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(d.argmax(), 0);
    }

    #[test]
    fn new_validates() {
        assert!(CategoricalDist::new(vec![0.6, 0.6]).is_err());
        assert!(CategoricalDist::new(vec![-0.1, 1.1]).is_err());
        assert!(CategoricalDist::new(vec![]).is_err());
    }

    #[test]
    fn entropy_values() {
        assert!((CategoricalDist::uniform(10).entropy() - libm::log(10.0)).abs() < 1e-12);
        assert_eq!(CategoricalDist::one_hot(4, 2).entropy(), 0.0);
        let d = CategoricalDist::new(vec![0.9, 0.1]).unwrap();
        assert!((d.entropy() - 0.325083).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn softmax_is_a_strictly_positive_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..20)) {
            let d = softmax(&logits).unwrap();
            let sum: f64 = d.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(d.probs().iter().all(|&p| p > 0.0));
        }

        #[test]
        fn entropy_bounded_and_permutation_invariant(logits in prop::collection::vec(-10.0f64..10.0, 2..12)) {
            let d = softmax(&logits).unwrap();
            let h = d.entropy();
            prop_assert!(h >= 0.0 && h <= libm::log(logits.len() as f64));
            let mut rev = logits.clone();
            rev.reverse();
            let hr = softmax(&rev).unwrap().entropy();
            prop_assert!((h - hr).abs() < 1e-12);
        }
    }
}
