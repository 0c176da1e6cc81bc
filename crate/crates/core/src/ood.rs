//! Entropy-threshold out-of-distribution detection.
//!
//! A record is flagged OOD iff its entropy is strictly above the threshold.
//! The threshold is fitted on one half of the sequences (maximizing
//! detection F1, OOD being the positive class) and scored on the other.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodRecord {
    pub entropy: f64,
    pub is_ood: bool,
    pub group_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Fit,
    Eval,
}

impl SplitKind {
    fn name(self) -> &'static str {
        match self {
            SplitKind::Fit => "fit",
            SplitKind::Eval => "eval",
        }
    }
}

/// Records tagged with the half they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSplit {
    pub kind: SplitKind,
    pub records: Vec<OodRecord>,
}

impl DetectionSplit {
    pub fn new(kind: SplitKind, records: Vec<OodRecord>) -> Self {
        Self { kind, records }
    }

    fn expect(&self, kind: SplitKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::SplitRole {
                expected: kind.name(),
                found: self.kind.name(),
            });
        }
        Ok(())
    }
}

/// Stratified 50/50 split by group id: in-distribution and OOD groups are
/// shuffled separately from `seed` and each stratum is halved (the fit half
/// gets `floor(n / 2)` groups).
pub fn split_halves(records: &[OodRecord], seed: u64) -> Result<(DetectionSplit, DetectionSplit)> {
    if records.len() < 2 {
        return Err(Error::DegenerateSplit("need at least two records".into()));
    }
    let mut groups: BTreeMap<u64, bool> = BTreeMap::new();
    for r in records {
        if let Some(&prev) = groups.get(&r.group_id) {
            if prev != r.is_ood {
                return Err(Error::DegenerateSplit(alloc::format!(
                    "group {} mixes in- and out-of-distribution records",
                    r.group_id
                )));
            }
        }
        groups.insert(r.group_id, r.is_ood);
    }
    let mut fit_groups = Vec::new();
    for (stratum, tag) in [(false, 0u64), (true, 1u64)] {
        let mut ids: Vec<u64> = groups
            .iter()
            .filter(|(_, &o)| o == stratum)
            .map(|(&g, _)| g)
            .collect();
        ids.shuffle(&mut rng::seeded(rng::derive(seed, 0x0d5e, tag)));
        fit_groups.extend_from_slice(&ids[..ids.len() / 2]);
    }
    fit_groups.sort_unstable();
    let (fit, eval): (Vec<OodRecord>, Vec<OodRecord>) = records
        .iter()
        .partition(|r| fit_groups.binary_search(&r.group_id).is_ok());
    for (name, part) in [("fit", &fit), ("eval", &eval)] {
        if !part.iter().any(|r| r.is_ood) || !part.iter().any(|r| !r.is_ood) {
            return Err(Error::DegenerateSplit(alloc::format!(
                "{name} half lacks one of the two classes"
            )));
        }
    }
    Ok((
        DetectionSplit::new(SplitKind::Fit, fit),
        DetectionSplit::new(SplitKind::Eval, eval),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn at(records: &[OodRecord], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for r in records {
            match (r.entropy > threshold, r.is_ood) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub fit_f1: f64,
    /// The fitted threshold flags every record or none of them.
    pub degenerate: bool,
}

fn next_down(x: f64) -> f64 {
    if x == 0.0 {
        -f64::from_bits(1)
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// Candidate thresholds: just below the smallest entropy (flag all), the
/// midpoints between consecutive distinct entropies, and the largest
/// entropy (flag none). Together they realize every achievable partition.
pub fn candidate_thresholds(records: &[OodRecord]) -> Vec<f64> {
    let mut e: Vec<f64> = records.iter().map(|r| r.entropy).collect();
    e.sort_by(f64::total_cmp);
    e.dedup();
    let mut out = Vec::with_capacity(e.len() + 1);
    if let (Some(&lo), Some(&hi)) = (e.first(), e.last()) {
        out.push(next_down(lo));
        out.extend(e.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        out.push(hi);
    }
    out
}

/// Threshold maximizing detection F1 on the fit half; ties go to the
/// smaller threshold.
pub fn fit_threshold(fit: &DetectionSplit) -> Result<ThresholdFit> {
    fit.expect(SplitKind::Fit)?;
    let recs = &fit.records;
    if !recs.iter().any(|r| r.is_ood) || !recs.iter().any(|r| !r.is_ood) {
        return Err(Error::DegenerateSplit(
            "fit half needs both in- and out-of-distribution records".into(),
        ));
    }
    let cands = candidate_thresholds(recs);
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    // ascending candidates, strict improvement only: ties keep the smaller
    for &t in &cands {
        let f1 = Confusion::at(recs, t).f1();
        if f1 > best.0 {
            best = (f1, t);
        }
    }
    let c = Confusion::at(recs, best.1);
    let degenerate = c.tp + c.fp == 0 || c.tn + c.fn_ == 0;
    if degenerate {
        log::warn!(
            "entropy threshold {} does not separate the fit half",
            best.1
        );
    }
    Ok(ThresholdFit {
        threshold: best.1,
        fit_f1: best.0,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodReport {
    pub threshold: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Nothing was flagged, so precision is defined as 0.
    pub precision_undefined: bool,
    /// No OOD records in the split, so recall is defined as 0.
    pub recall_undefined: bool,
}

/// Score the threshold on the evaluation half.
pub fn evaluate_detection(eval: &DetectionSplit, threshold: f64) -> Result<OodReport> {
    eval.expect(SplitKind::Eval)?;
    if eval.records.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let c = Confusion::at(&eval.records, threshold);
    let n = eval.records.len() as f64;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(OodReport {
        threshold,
        accuracy: (c.tp + c.tn) as f64 / n,
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        f1: c.f1(),
        confusion: c,
        precision_undefined: c.tp + c.fp == 0,
        recall_undefined: c.tp + c.fn_ == 0,
    })
}
