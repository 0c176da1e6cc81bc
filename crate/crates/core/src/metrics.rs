//! Scoring: accuracy, macro-F1, ECE, the multiclass Brier score with its
//! binned reliability / resolution / uncertainty decomposition, and entropy
//! histograms.
//!
//! Every reduction runs sequentially in record order so results are
//! reproducible bit for bit.

use alloc::vec::Vec;

use crate::dist::CategoricalDist;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_ECE_BINS: usize = 15;
pub const DEFAULT_BRIER_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Class(usize),
    /// Out-of-distribution sample with no class in the label space.
    Ood,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub dist: CategoricalDist,
    pub label: Label,
    pub group_id: u64,
}

impl PredictionRecord {
    pub fn new(dist: CategoricalDist, label: usize, group_id: u64) -> Self {
        Self {
            dist,
            label: Label::Class(label),
            group_id,
        }
    }

    pub fn ood(dist: CategoricalDist, group_id: u64) -> Self {
        Self {
            dist,
            label: Label::Ood,
            group_id,
        }
    }
}

fn labelled(records: &[PredictionRecord]) -> Result<Vec<(&CategoricalDist, usize)>> {
    if records.is_empty() {
        return Err(Error::Empty("prediction records"));
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| match r.label {
            Label::Class(y) if y < r.dist.num_classes() => Ok((&r.dist, y)),
            Label::Class(y) => Err(Error::LabelOutOfRange {
                label: y,
                classes: r.dist.num_classes(),
            }),
            Label::Ood => Err(invalid!("record {i} is marked out-of-distribution")),
        })
        .collect()
}

/// Fraction of records whose argmax (lowest index on ties) equals the label.
pub fn accuracy(records: &[PredictionRecord]) -> Result<f64> {
    let recs = labelled(records)?;
    let correct = recs.iter().filter(|(d, y)| d.argmax() == *y).count();
    Ok(correct as f64 / recs.len() as f64)
}

/// Unweighted mean of per-class F1 over the classes that occur as a label or
/// as a prediction.
pub fn macro_f1(records: &[PredictionRecord], classes: usize) -> Result<f64> {
    let recs = labelled(records)?;
    let (mut tp, mut fp, mut fn_) = (
        alloc::vec![0u64; classes],
        alloc::vec![0u64; classes],
        alloc::vec![0u64; classes],
    );
    for (d, y) in &recs {
        let p = d.argmax();
        if p >= classes || *y >= classes {
            return Err(Error::LabelOutOfRange {
                label: p.max(*y),
                classes,
            });
        }
        if p == *y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[*y] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..classes {
        if tp[c] + fp[c] + fn_[c] == 0 {
            continue;
        }
        present += 1;
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        sum += 2.0 * tp[c] as f64 / denom as f64;
    }
    Ok(sum / present as f64)
}

/// Expected calibration error over `n_bins` equal-width bins on `(0, 1]`
/// of top-label confidence.
pub fn ece(records: &[PredictionRecord], n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(invalid!("ECE needs at least one bin"));
    }
    let recs = labelled(records)?;
    let mut count = alloc::vec![0usize; n_bins];
    let mut conf_sum = alloc::vec![0.0; n_bins];
    let mut correct = alloc::vec![0usize; n_bins];
    for (d, y) in &recs {
        let conf = d.confidence();
        let b = confidence_bin(conf, n_bins);
        count[b] += 1;
        conf_sum[b] += conf;
        if d.argmax() == *y {
            correct[b] += 1;
        }
    }
    let n = recs.len() as f64;
    let mut total = 0.0;
    for b in 0..n_bins {
        if count[b] > 0 {
            let k = count[b] as f64;
            total += (k / n) * (correct[b] as f64 / k - conf_sum[b] / k).abs();
        }
    }
    Ok(total)
}

/// Bin of `conf` among `n_bins` right-closed bins `((b-1)/n, b/n]`.
fn confidence_bin(conf: f64, n_bins: usize) -> usize {
    let b = libm::ceil(conf * n_bins as f64) as usize;
    b.clamp(1, n_bins) - 1
}

/// Multiclass Brier score and its binned decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrierDecomposition {
    pub score: f64,
    pub reliability: f64,
    pub resolution: f64,
    pub uncertainty: f64,
}

/// Bin of a forecast probability among `n_bins` half-open bins `[b/n, (b+1)/n)`
/// (the last bin also takes `1.0`).
pub fn forecast_bin(p: f64, n_bins: usize) -> usize {
    ((p * n_bins as f64) as usize).min(n_bins - 1)
}

/// `score = (1/N) sum_n sum_c (p_nc - o_nc)^2`, decomposed per class by
/// binning the class probabilities into `n_bins` bins and summing
/// `REL_c`, `RES_c`, `UNC_c` over classes. `REL - RES + UNC` equals the
/// score exactly when every bin holds a single forecast value.
pub fn brier(
    records: &[PredictionRecord],
    classes: usize,
    n_bins: usize,
) -> Result<BrierDecomposition> {
    if n_bins == 0 {
        return Err(invalid!("Brier decomposition needs at least one bin"));
    }
    let recs = labelled(records)?;
    let n = recs.len() as f64;
    let mut score = 0.0;
    for (d, y) in &recs {
        if d.num_classes() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                found: d.num_classes(),
            });
        }
        for (c, &p) in d.probs().iter().enumerate() {
            let o = if c == *y { 1.0 } else { 0.0 };
            score += (p - o) * (p - o);
        }
    }
    score /= n;

    let (mut rel, mut res, mut unc) = (0.0, 0.0, 0.0);
    let mut count = alloc::vec![0usize; n_bins];
    let mut f_sum = alloc::vec![0.0; n_bins];
    let mut o_sum = alloc::vec![0.0; n_bins];
    for c in 0..classes {
        count.iter_mut().for_each(|v| *v = 0);
        f_sum.iter_mut().for_each(|v| *v = 0.0);
        o_sum.iter_mut().for_each(|v| *v = 0.0);
        let mut base = 0.0;
        for (d, y) in &recs {
            let p = d.probs()[c];
            let o = if *y == c { 1.0 } else { 0.0 };
            let b = forecast_bin(p, n_bins);
            count[b] += 1;
            f_sum[b] += p;
            o_sum[b] += o;
            base += o;
        }
        let o_bar = base / n;
        unc += o_bar * (1.0 - o_bar);
        for b in 0..n_bins {
            if count[b] == 0 {
                continue;
            }
            let k = count[b] as f64;
            let f_b = f_sum[b] / k;
            let o_b = o_sum[b] / k;
            rel += k * (f_b - o_b) * (f_b - o_b) / n;
            res += k * (o_b - o_bar) * (o_b - o_bar) / n;
        }
    }
    Ok(BrierDecomposition {
        score,
        reliability: rel,
        resolution: res,
        uncertainty: unc,
    })
}

/// Shannon entropy in nats.
pub fn entropy(dist: &CategoricalDist) -> f64 {
    dist.entropy()
}

/// Equal-width histogram with its sample mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `n_bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
}

/// Histogram of `values` over `range` (values outside land in the end bins).
pub fn histogram(values: &[f64], n_bins: usize, range: (f64, f64)) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Empty("histogram values"));
    }
    let (lo, hi) = range;
    // also rejects NaN bounds
    if n_bins == 0 || hi.partial_cmp(&lo) != Some(core::cmp::Ordering::Greater) {
        return Err(invalid!(
            "histogram needs n_bins >= 1 and a non-empty range"
        ));
    }
    let width = (hi - lo) / n_bins as f64;
    let edges = (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut counts = alloc::vec![0; n_bins];
    for &v in values {
        let b = if v <= lo {
            0
        } else {
            ((v - lo) / width) as usize
        };
        counts[b.min(n_bins - 1)] += 1;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(Histogram {
        edges,
        counts,
        mean,
    })
}

/// Entropy histogram of the records' distributions, by default over `[0, ln C]`.
pub fn entropy_histogram(
    records: &[PredictionRecord],
    n_bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    let first = records.first().ok_or(Error::Empty("prediction records"))?;
    let range = range.unwrap_or((0.0, libm::log(first.dist.num_classes() as f64)));
    let h: Vec<f64> = records.iter().map(|r| r.dist.entropy()).collect();
    histogram(&h, n_bins, range)
}

/// Per-strategy summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub ece: f64,
    pub brier_score: f64,
    pub brier_reliability: f64,
    pub mean_entropy: f64,
    pub forward_passes: u64,
    pub n_samples: usize,
}

impl EvalReport {
    pub fn from_records(
        records: &[PredictionRecord],
        classes: usize,
        forward_passes: u64,
    ) -> Result<Self> {
        let b = brier(records, classes, DEFAULT_BRIER_BINS)?;
        let mean_entropy =
            records.iter().map(|r| r.dist.entropy()).sum::<f64>() / records.len() as f64;
        Ok(Self {
            accuracy: accuracy(records)?,
            macro_f1: macro_f1(records, classes)?,
            ece: ece(records, DEFAULT_ECE_BINS)?,
            brier_score: b.score,
            brier_reliability: b.reliability,
            mean_entropy,
            forward_passes,
            n_samples: records.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    fn rec(p: &[f64], y: usize) -> PredictionRecord {
        PredictionRecord::new(CategoricalDist::new(p.to_vec()).unwrap(), y, 0)
    }

    #[test]
    fn accuracy_examples() {
        let all = vec![rec(&[1.0, 0.0], 0), rec(&[0.2, 0.8], 1)];
        assert_eq!(accuracy(&all).unwrap(), 1.0);
        let quarter = vec![
            rec(&[1.0, 0.0], 0),
            rec(&[1.0, 0.0], 1),
            rec(&[1.0, 0.0], 1),
            rec(&[0.9, 0.1], 1),
        ];
        assert_eq!(accuracy(&quarter).unwrap(), 0.25);
        assert_eq!(accuracy(&[rec(&[0.5, 0.5], 0)]).unwrap(), 1.0);
        assert!(accuracy(&[]).is_err());
        let ood = PredictionRecord::ood(CategoricalDist::uniform(2), 0);
        assert!(accuracy(&[ood]).is_err());
    }

    #[test]
    fn macro_f1_examples() {
        let perfect = vec![
            rec(&[1.0, 0.0, 0.0], 0),
            rec(&[0.0, 1.0, 0.0], 1),
            rec(&[0.0, 0.0, 1.0], 2),
        ];
        assert_eq!(macro_f1(&perfect, 3).unwrap(), 1.0);
        // precision_0 = 1/2, recall_0 = 1 -> F1_0 = 2/3; F1_1 = 0
        let skew = vec![
            rec(&[1.0, 0.0], 0),
            rec(&[1.0, 0.0], 0),
            rec(&[1.0, 0.0], 1),
            rec(&[1.0, 0.0], 1),
        ];
        assert!((macro_f1(&skew, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let lone = vec![rec(&[0.0, 1.0, 0.0], 1), rec(&[0.1, 0.8, 0.1], 1)];
        assert_eq!(macro_f1(&lone, 3).unwrap(), 1.0);
    }

    #[test]
    fn macro_f1_equals_accuracy_for_symmetric_binary() {
        // confusion [[a, b], [b, a]]
        for (a, b) in [(10, 3), (7, 7), (20, 1)] {
            let mut recs = Vec::new();
            recs.extend((0..a).map(|_| rec(&[0.9, 0.1], 0)));
            recs.extend((0..b).map(|_| rec(&[0.1, 0.9], 0)));
            recs.extend((0..a).map(|_| rec(&[0.1, 0.9], 1)));
            recs.extend((0..b).map(|_| rec(&[0.9, 0.1], 1)));
            assert!((macro_f1(&recs, 2).unwrap() - accuracy(&recs).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn ece_examples() {
        let onehot = vec![rec(&[1.0, 0.0], 0), rec(&[0.0, 1.0], 1)];
        assert_eq!(ece(&onehot, 15).unwrap(), 0.0);
        assert!((ece(&[rec(&[0.8, 0.2], 1)], 15).unwrap() - 0.8).abs() < 1e-15);
        let mut cal = Vec::new();
        cal.extend((0..7).map(|_| rec(&[0.7, 0.3], 0)));
        cal.extend((0..3).map(|_| rec(&[0.7, 0.3], 1)));
        assert!(ece(&cal, 15).unwrap() < 1e-12);
        assert!(ece(&cal, 0).is_err());
    }

    #[test]
    fn ece_zero_on_calibrated_bins() {
        // each bin: confidence k/10 with exactly k of 10 correct
        let mut recs = Vec::new();
        for k in 5..=10 {
            let conf = k as f64 / 10.0;
            for i in 0..10 {
                let y = if i < k { 0 } else { 1 };
                recs.push(rec(&[conf, 1.0 - conf], y));
            }
        }
        assert!(ece(&recs, 10).unwrap() < 1e-12);
    }

    #[test]
    fn brier_examples() {
        let perfect = vec![rec(&[1.0, 0.0], 0), rec(&[0.0, 1.0], 1)];
        let b = brier(&perfect, 2, 10).unwrap();
        assert_eq!((b.score, b.reliability), (0.0, 0.0));
        let u = brier(&[rec(&[0.5, 0.5], 0)], 2, 10).unwrap();
        assert!((u.score - 0.5).abs() < 1e-15);
    }

    /// Independent per-bin recomputation from explicit bin membership lists.
    fn brute_decomposition(
        records: &[PredictionRecord],
        classes: usize,
        n_bins: usize,
    ) -> (f64, f64, f64) {
        let n = records.len() as f64;
        let label = |r: &PredictionRecord| match r.label {
            Label::Class(y) => y,
            Label::Ood => unreachable!(),
        };
        let (mut rel, mut res, mut unc) = (0.0, 0.0, 0.0);
        for c in 0..classes {
            let obar = records.iter().filter(|r| label(r) == c).count() as f64 / n;
            unc += obar * (1.0 - obar);
            for b in 0..n_bins {
                let members: Vec<&PredictionRecord> = records
                    .iter()
                    .filter(|r| {
                        let p = r.dist.probs()[c];
                        let lo = b as f64 / n_bins as f64;
                        let hi = (b + 1) as f64 / n_bins as f64;
                        (p >= lo && p < hi) || (b == n_bins - 1 && p >= hi)
                    })
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let k = members.len() as f64;
                let f = members.iter().map(|r| r.dist.probs()[c]).sum::<f64>() / k;
                let o = members.iter().filter(|r| label(r) == c).count() as f64 / k;
                rel += k / n * (f - o).powi(2);
                res += k / n * (o - obar).powi(2);
            }
        }
        (rel, res, unc)
    }

    #[test]
    fn brier_identity_on_bin_centers() {
        let mut r = rng::seeded(6);
        let mut recs = Vec::new();
        for i in 0..500 {
            // two-class forecasts on bin centres 0.05, 0.15, ..., 0.95
            let k = r.random_range(0..10);
            let p = 0.05 + 0.1 * k as f64;
            let y = if r.random::<f64>() < p { 0 } else { 1 };
            let mut q = vec![p, 1.0 - p];
            q[1] = 1.0 - q[0];
            recs.push(PredictionRecord::new(
                CategoricalDist::new(q).unwrap(),
                y,
                i,
            ));
        }
        let b = brier(&recs, 2, 10).unwrap();
        assert!((b.reliability - b.resolution + b.uncertainty - b.score).abs() < 1e-9);
        let (rel, res, unc) = brute_decomposition(&recs, 2, 10);
        assert!((b.reliability - rel).abs() < 1e-12);
        assert!((b.resolution - res).abs() < 1e-12);
        assert!((b.uncertainty - unc).abs() < 1e-12);
    }

    #[test]
    fn entropy_histogram_examples() {
        let onehot: Vec<_> = (0..5).map(|i| rec(&[0.0, 1.0, 0.0], i % 3)).collect();
        let h = entropy_histogram(&onehot, 10, None).unwrap();
        assert_eq!(h.counts[0], 5);
        assert_eq!(h.mean, 0.0);
        let uni: Vec<_> = (0..4)
            .map(|_| PredictionRecord::ood(CategoricalDist::uniform(4), 0))
            .collect();
        let h = entropy_histogram(&uni, 8, None).unwrap();
        assert_eq!(h.counts[7], 4);
        assert!((h.mean - libm::log(4.0)).abs() < 1e-12);
        assert!(entropy_histogram(&[], 4, None).is_err());
    }

    #[test]
    fn entropy_histogram_matches_recount() {
        let mut r = rng::seeded(2);
        let recs: Vec<_> = (0..300)
            .map(|i| {
                let z: Vec<f64> = (0..5).map(|_| r.random_range(-4.0..4.0)).collect();
                PredictionRecord::new(crate::dist::softmax(&z).unwrap(), 0, i)
            })
            .collect();
        let h = entropy_histogram(&recs, 12, None).unwrap();
        let top = libm::log(5.0);
        let mut recount = vec![0usize; 12];
        for rr in &recs {
            let e = rr.dist.entropy();
            let mut b = 0;
            while b < 11 && e >= top * (b + 1) as f64 / 12.0 {
                b += 1;
            }
            recount[b] += 1;
        }
        assert_eq!(h.counts, recount);
        assert_eq!(h.counts.iter().sum::<usize>(), 300);
    }

    proptest! {
        #[test]
        fn brier_bounds_and_order_invariance(seed in 0u64..500) {
            let mut r = rng::seeded(seed);
            let mut recs: Vec<_> = (0..40)
                .map(|i| {
                    let z: Vec<f64> = (0..4).map(|_| r.random_range(-5.0..5.0)).collect();
                    PredictionRecord::new(crate::dist::softmax(&z).unwrap(), r.random_range(0..4), i)
                })
                .collect();
            let a = brier(&recs, 4, 10).unwrap();
            let e = ece(&recs, 15).unwrap();
            let f = macro_f1(&recs, 4).unwrap();
            prop_assert!(a.score >= 0.0 && a.score <= 2.0);
            recs.shuffle(&mut r);
            let b = brier(&recs, 4, 10).unwrap();
            prop_assert!((a.score - b.score).abs() < 1e-12);
            prop_assert!((a.reliability - b.reliability).abs() < 1e-12);
            prop_assert!((e - ece(&recs, 15).unwrap()).abs() < 1e-12);
            prop_assert_eq!(f, macro_f1(&recs, 4).unwrap());
        }
    }
}
