//! Strategy dispatch over a trained ensemble: per-sequence prediction,
//! dataset evaluation and validation logits for temperature fitting.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::Rng as _;

use crate::calibration::{fit_temperature, NllMode, Temperature, TemperatureFit};
use crate::data::FrameDataset;
use crate::dist::CategoricalDist;
use crate::error::{invalid, Error, Result};
use crate::fusion::{self, CostCounter, MemberSchedule, SequenceSample};
use crate::metrics::{EvalReport, PredictionRecord};
use crate::mlp::{ForwardMode, MlpModel};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    /// Member 0 on every frame, time-averaged.
    Sm,
    /// Member 0 on one seeded-uniform frame per sequence.
    SmSingleFrame,
    /// Every member on every frame.
    De,
    /// One member per frame, round-robin.
    Desot,
    /// Member 0 with dropout active, one mask per frame.
    McDropout,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Self::Sm,
        Self::SmSingleFrame,
        Self::De,
        Self::Desot,
        Self::McDropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sm => "sm",
            Self::SmSingleFrame => "sm_single_frame",
            Self::De => "de",
            Self::Desot => "desot",
            Self::McDropout => "mcdropout",
        }
    }

    /// Strategies whose temperature is fitted jointly over all members.
    pub fn uses_ensemble(self) -> bool {
        matches!(self, Self::De | Self::Desot)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "mc_dropout" && *k == Self::McDropout))
            .ok_or_else(|| invalid!("unknown strategy '{s}'"))
    }
}

/// Trained members sharing one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<MlpModel>,
}

impl Ensemble {
    pub fn new(members: Vec<MlpModel>) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("ensemble members"))?;
        if let Some(m) = members.iter().find(|m| m.dims() != first.dims()) {
            return Err(invalid!(
                "member dims {:?} differ from {:?}",
                m.dims(),
                first.dims()
            ));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[MlpModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.members[0].num_classes()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    /// The first `m` members.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.members.len() {
            return Err(invalid!(
                "cannot take {m} of {} members",
                self.members.len()
            ));
        }
        Ok(Self {
            members: self.members[..m].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub temperature: Temperature,
    /// Member used at the first frame of every sequence.
    pub schedule_offset: usize,
    /// Keys the single-frame choice and the MC-dropout masks per sequence.
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            temperature: Temperature::ONE,
            schedule_offset: 0,
            seed: 0,
        }
    }
}

pub fn predict_sequence(
    ens: &Ensemble,
    strategy: Strategy,
    seq: &SequenceSample,
    settings: &EvalSettings,
    counter: &mut CostCounter,
) -> Result<CategoricalDist> {
    let temp = settings.temperature;
    let members = ens.members();
    match strategy {
        Strategy::Sm => fusion::predict_sm(&members[0], seq, temp, counter),
        Strategy::SmSingleFrame => {
            if seq.is_empty() {
                return Err(Error::Empty("sequence frames"));
            }
            let mut r = rng::seeded(rng::derive(
                settings.seed,
                rng::STREAM_FRAME,
                seq.group_id(),
            ));
            let t = r.random_range(0..seq.len());
            let dist = fusion::frame_dist(
                &members[0],
                &seq.frames()[t],
                ForwardMode::EvalDeterministic,
                0,
                temp,
            )?;
            counter.record(0);
            Ok(dist)
        }
        Strategy::De => fusion::predict_de(members, seq, temp, counter),
        Strategy::Desot => {
            let schedule =
                MemberSchedule::round_robin(seq.len(), members.len(), settings.schedule_offset)?;
            fusion::predict_desot(members, seq, &schedule, temp, counter)
        }
        Strategy::McDropout => {
            let seed = rng::derive(settings.seed, rng::STREAM_MC, seq.group_id());
            fusion::predict_mc_dropout(&members[0], seq, seed, temp, counter)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutput {
    pub records: Vec<PredictionRecord>,
    pub counter: CostCounter,
}

/// Predict every sequence in order. `ood` marks all records as OOD.
pub fn predict_all(
    ens: &Ensemble,
    strategy: Strategy,
    seqs: &[SequenceSample],
    settings: &EvalSettings,
    ood: bool,
) -> Result<StrategyOutput> {
    let mut counter = CostCounter::new(ens.len());
    let mut records = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let dist = predict_sequence(ens, strategy, seq, settings, &mut counter)?;
        records.push(if ood {
            PredictionRecord::ood(dist, seq.group_id())
        } else {
            PredictionRecord::new(dist, seq.label(), seq.group_id())
        });
    }
    Ok(StrategyOutput { records, counter })
}

pub fn evaluate(
    ens: &Ensemble,
    strategy: Strategy,
    seqs: &[SequenceSample],
    settings: &EvalSettings,
) -> Result<EvalReport> {
    if seqs.is_empty() {
        return Err(Error::Empty("evaluation sequences"));
    }
    let out = predict_all(ens, strategy, seqs, settings, false)?;
    EvalReport::from_records(
        &out.records,
        ens.num_classes(),
        out.counter.forward_passes(),
    )
}

/// Per-frame logits on `val` laid out samples x members x classes, with the
/// NLL mode matching how `strategy` combines its members.
pub fn validation_logits(
    ens: &Ensemble,
    strategy: Strategy,
    val: &FrameDataset,
    seed: u64,
) -> Result<(Vec<Vec<Vec<f64>>>, NllMode)> {
    if val.frame_len() != ens.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: ens.input_dim(),
            found: val.frame_len(),
        });
    }
    let mut sets = Vec::with_capacity(val.len());
    for i in 0..val.len() {
        let x = val.frame(i);
        let logits = if strategy.uses_ensemble() {
            ens.members()
                .iter()
                .map(|m| m.logits(x, ForwardMode::EvalDeterministic, 0))
                .collect::<Result<Vec<_>>>()?
        } else if strategy == Strategy::McDropout {
            let s = rng::derive(seed, rng::STREAM_CALIB, i as u64);
            alloc::vec![ens.members()[0].logits(x, ForwardMode::EvalWithDropout, s)?]
        } else {
            alloc::vec![ens.members()[0].logits(x, ForwardMode::EvalDeterministic, 0)?]
        };
        sets.push(logits);
    }
    let mode = if strategy.uses_ensemble() {
        NllMode::JointEnsemble
    } else {
        NllMode::Single
    };
    Ok((sets, mode))
}

pub fn calibrate(
    ens: &Ensemble,
    strategy: Strategy,
    val: &FrameDataset,
    seed: u64,
) -> Result<TemperatureFit> {
    let (sets, mode) = validation_logits(ens, strategy, val, seed)?;
    fit_temperature(&sets, val.labels(), mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ensemble(m: usize) -> Ensemble {
        let members = (0..m)
            .map(|i| MlpModel::init(&[4, 6, 3], 0.2, 10 + i as u64).unwrap())
            .collect();
        Ensemble::new(members).unwrap()
    }

    fn sequences(n: usize, t: usize) -> Vec<SequenceSample> {
        let mut r = rng::seeded(5);
        (0..n)
            .map(|i| {
                let frames = (0..t)
                    .map(|_| (0..4).map(|_| r.random_range(0.0f32..1.0)).collect())
                    .collect();
                SequenceSample::new(frames, i % 3, i as u64).unwrap()
            })
            .collect()
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("ensemble".parse::<Strategy>().is_err());
    }

    #[test]
    fn forward_pass_costs() {
        let ens = ensemble(5);
        let seqs = sequences(7, 11);
        let passes = |s| {
            predict_all(&ens, s, &seqs, &EvalSettings::default(), false)
                .unwrap()
                .counter
                .forward_passes()
        };
        assert_eq!(passes(Strategy::Sm), 77);
        assert_eq!(passes(Strategy::Desot), 77);
        assert_eq!(passes(Strategy::De), 385);
        assert_eq!(passes(Strategy::McDropout), 77);
        assert_eq!(passes(Strategy::SmSingleFrame), 7);
    }

    #[test]
    fn single_member_strategies_coincide() {
        let ens = ensemble(1);
        let seqs = sequences(20, 5);
        let s = EvalSettings::default();
        let sm = predict_all(&ens, Strategy::Sm, &seqs, &s, false).unwrap();
        for other in [Strategy::De, Strategy::Desot] {
            let o = predict_all(&ens, other, &seqs, &s, false).unwrap();
            for (a, b) in sm.records.iter().zip(&o.records) {
                for (x, y) in a.dist.probs().iter().zip(b.dist.probs()) {
                    assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_frame_matches_some_frame() {
        let ens = ensemble(2);
        let seqs = sequences(10, 6);
        let out = predict_all(
            &ens,
            Strategy::SmSingleFrame,
            &seqs,
            &EvalSettings::default(),
            false,
        )
        .unwrap();
        for (rec, seq) in out.records.iter().zip(&seqs) {
            let hit = seq.frames().iter().any(|f| {
                let d = crate::softmax(
                    &ens.members()[0]
                        .logits(f, ForwardMode::EvalDeterministic, 0)
                        .unwrap(),
                )
                .unwrap();
                d == rec.dist
            });
            assert!(hit);
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let ens = ensemble(3);
        let seqs = sequences(15, 4);
        let s = EvalSettings {
            seed: 9,
            ..Default::default()
        };
        for strat in Strategy::ALL {
            assert_eq!(
                evaluate(&ens, strat, &seqs, &s).unwrap(),
                evaluate(&ens, strat, &seqs, &s).unwrap()
            );
        }
    }

    #[test]
    fn calibration_never_worse_than_one() {
        let ens = ensemble(3);
        let mut r = rng::seeded(2);
        let pixels: Vec<f32> = (0..30 * 4).map(|_| r.random_range(0.0f32..1.0)).collect();
        let labels = (0..30).map(|i| i % 3).collect();
        let names = vec!["a".into(), "b".into(), "c".into()];
        let val = FrameDataset::new(1, 4, 1, names, labels, pixels).unwrap();
        for strat in Strategy::ALL {
            let fit = calibrate(&ens, strat, &val, 1).unwrap();
            assert!(fit.nll <= fit.nll_at_one + 1e-9);
        }
    }

    #[test]
    fn ensemble_validation() {
        assert!(Ensemble::new(vec![]).is_err());
        let a = MlpModel::init(&[4, 6, 3], 0.0, 0).unwrap();
        let b = MlpModel::init(&[4, 5, 3], 0.0, 0).unwrap();
        assert!(Ensemble::new(vec![a.clone(), b]).is_err());
        let ens = Ensemble::new(vec![a.clone(), a]).unwrap();
        assert_eq!(ens.prefix(1).unwrap().len(), 1);
        assert!(ens.prefix(3).is_err());
    }
}
