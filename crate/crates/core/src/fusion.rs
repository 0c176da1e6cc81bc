//! Sequence classification strategies.
//!
//! All strategies average categorical distributions in probability space:
//!
//! * single model (SM): one network on every frame, averaged over time;
//! * deep ensemble (DE): every member on every frame, averaged over members
//!   and time (`M * T` forward passes);
//! * scheduled ensemble (DESOT): member `schedule[t]` on frame `t` only,
//!   averaged over time (`T` forward passes);
//! * MC-dropout: one stochastic pass of a dropout network per frame.
//!
//! Member indices are zero-based throughout.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::calibration::{apply_temperature, Temperature};
use crate::dist::{mean_of, CategoricalDist};
use crate::error::{invalid, Error, Result};
use crate::mlp::{ForwardMode, MlpModel};
use crate::rng;

/// `T` frames of one tracked object with a single label.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    frames: Vec<Vec<f32>>,
    label: usize,
    group_id: u64,
}

impl SequenceSample {
    pub fn new(frames: Vec<Vec<f32>>, label: usize, group_id: u64) -> Result<Self> {
        let first = frames.first().ok_or(Error::Empty("sequence frames"))?;
        if let Some(f) = frames.iter().find(|f| f.len() != first.len()) {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                found: f.len(),
            });
        }
        Ok(Self {
            frames,
            label,
            group_id,
        })
    }

    pub fn frames(&self) -> &[Vec<f32>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn group_id(&self) -> u64 {
        self.group_id
    }
}

/// Forward passes spent, in total and per ensemble member.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostCounter {
    forward_passes: u64,
    per_member_passes: Vec<u64>,
}

impl CostCounter {
    pub fn new(members: usize) -> Self {
        Self {
            forward_passes: 0,
            per_member_passes: alloc::vec![0; members],
        }
    }

    pub fn record(&mut self, member: usize) {
        if member >= self.per_member_passes.len() {
            self.per_member_passes.resize(member + 1, 0);
        }
        self.per_member_passes[member] += 1;
        self.forward_passes += 1;
    }

    pub fn forward_passes(&self) -> u64 {
        self.forward_passes
    }

    pub fn per_member_passes(&self) -> &[u64] {
        &self.per_member_passes
    }

    /// Add another counter's totals (merging per-worker counters).
    pub fn merge(&mut self, other: &CostCounter) {
        if other.per_member_passes.len() > self.per_member_passes.len() {
            self.per_member_passes
                .resize(other.per_member_passes.len(), 0);
        }
        for (a, b) in self
            .per_member_passes
            .iter_mut()
            .zip(&other.per_member_passes)
        {
            *a += b;
        }
        self.forward_passes += other.forward_passes;
    }
}

/// Member used at each time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberSchedule {
    assignment: Vec<usize>,
    members: usize,
}

impl MemberSchedule {
    /// Explicit assignment; every entry must be below `members`.
    pub fn new(assignment: Vec<usize>, members: usize) -> Result<Self> {
        if members == 0 || assignment.is_empty() {
            return Err(invalid!("schedule needs at least one step and one member"));
        }
        if let Some(&m) = assignment.iter().find(|&&m| m >= members) {
            return Err(invalid!("schedule references member {m} of {members}"));
        }
        Ok(Self {
            assignment,
            members,
        })
    }

    /// `schedule[t] = (t + offset) mod M`.
    pub fn round_robin(t_len: usize, members: usize, offset: usize) -> Result<Self> {
        if t_len == 0 || members == 0 || offset >= members {
            return Err(invalid!("round robin needs T >= 1, M >= 1, offset < M (T={t_len}, M={members}, offset={offset})"));
        }
        Ok(Self {
            assignment: (0..t_len).map(|t| (t + offset) % members).collect(),
            members,
        })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn member_at(&self, t: usize) -> usize {
        self.assignment[t]
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn usage_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.members];
        for &m in &self.assignment {
            counts[m] += 1;
        }
        counts
    }
}

/// Average of per-frame distributions.
pub fn fuse_time(frame_dists: &[CategoricalDist]) -> Result<CategoricalDist> {
    mean_of(frame_dists)
}

/// Average of per-member distributions.
pub fn fuse_ensemble(member_dists: &[CategoricalDist]) -> Result<CategoricalDist> {
    mean_of(member_dists)
}

pub(crate) fn frame_dist(
    model: &MlpModel,
    frame: &[f32],
    mode: ForwardMode,
    rng_seed: u64,
    temp: Temperature,
) -> Result<CategoricalDist> {
    apply_temperature(&model.logits(frame, mode, rng_seed)?, temp)
}

/// Single model: `(1/T) sum_t p(x^t)`.
pub fn predict_sm(
    model: &MlpModel,
    seq: &SequenceSample,
    temp: Temperature,
    counter: &mut CostCounter,
) -> Result<CategoricalDist> {
    let mut dists = Vec::with_capacity(seq.len());
    for frame in seq.frames() {
        dists.push(frame_dist(
            model,
            frame,
            ForwardMode::EvalDeterministic,
            0,
            temp,
        )?);
        counter.record(0);
    }
    fuse_time(&dists)
}

/// Deep ensemble: `(1/MT) sum_m sum_t p_m(x^t)`, summed member-major.
pub fn predict_de(
    models: &[MlpModel],
    seq: &SequenceSample,
    temp: Temperature,
    counter: &mut CostCounter,
) -> Result<CategoricalDist> {
    if models.is_empty() {
        return Err(Error::Empty("ensemble members"));
    }
    check_classes(models)?;
    let mut per_member = Vec::with_capacity(models.len());
    for (m, model) in models.iter().enumerate() {
        let mut dists = Vec::with_capacity(seq.len());
        for frame in seq.frames() {
            dists.push(frame_dist(
                model,
                frame,
                ForwardMode::EvalDeterministic,
                0,
                temp,
            )?);
            counter.record(m);
        }
        per_member.push(fuse_time(&dists)?);
    }
    fuse_ensemble(&per_member)
}

/// Scheduled ensemble: `(1/T) sum_t p_{schedule[t]}(x^t)`.
pub fn predict_desot(
    models: &[MlpModel],
    seq: &SequenceSample,
    schedule: &MemberSchedule,
    temp: Temperature,
    counter: &mut CostCounter,
) -> Result<CategoricalDist> {
    if schedule.members() != models.len() {
        return Err(Error::ScheduleMismatch {
            schedule: schedule.members(),
            models: models.len(),
        });
    }
    if schedule.len() != seq.len() {
        return Err(invalid!(
            "schedule has {} steps for a sequence of {} frames",
            schedule.len(),
            seq.len()
        ));
    }
    check_classes(models)?;
    let mut dists = Vec::with_capacity(seq.len());
    for (t, frame) in seq.frames().iter().enumerate() {
        let m = schedule.member_at(t);
        dists.push(frame_dist(
            &models[m],
            frame,
            ForwardMode::EvalDeterministic,
            0,
            temp,
        )?);
        counter.record(m);
    }
    fuse_time(&dists)
}

/// MC-dropout: one dropout-active pass per frame with the mask keyed by
/// `(rng_seed, t)`, averaged over time.
pub fn predict_mc_dropout(
    model: &MlpModel,
    seq: &SequenceSample,
    rng_seed: u64,
    temp: Temperature,
    counter: &mut CostCounter,
) -> Result<CategoricalDist> {
    if model.dropout_rate() == 0.0 {
        log::warn!("MC-dropout with dropout rate 0 degenerates to a single model");
    }
    let mut dists = Vec::with_capacity(seq.len());
    for (t, frame) in seq.frames().iter().enumerate() {
        let seed = rng::derive(rng_seed, rng::STREAM_MC, t as u64);
        dists.push(frame_dist(
            model,
            frame,
            ForwardMode::EvalWithDropout,
            seed,
            temp,
        )?);
        counter.record(0);
    }
    fuse_time(&dists)
}

fn check_classes(models: &[MlpModel]) -> Result<()> {
    let c = models[0].num_classes();
    match models.iter().find(|m| m.num_classes() != c) {
        Some(m) => Err(Error::DimensionMismatch {
            expected: c,
            found: m.num_classes(),
        }),
        None => Ok(()),
    }
}

/// Moving average over the most recent `window` frame distributions.
#[derive(Debug, Clone)]
pub struct StreamingFuser {
    window: usize,
    recent: VecDeque<CategoricalDist>,
}

impl StreamingFuser {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(invalid!("window must be at least 1"));
        }
        Ok(Self {
            window,
            recent: VecDeque::new(),
        })
    }

    /// Averages everything seen so far.
    pub fn unbounded() -> Self {
        Self {
            window: usize::MAX,
            recent: VecDeque::new(),
        }
    }

    /// Push the latest frame distribution and return the windowed mean.
    pub fn push(&mut self, dist: CategoricalDist) -> Result<CategoricalDist> {
        if let Some(first) = self.recent.front() {
            if first.num_classes() != dist.num_classes() {
                return Err(Error::DimensionMismatch {
                    expected: first.num_classes(),
                    found: dist.num_classes(),
                });
            }
        }
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(dist);
        mean_of(self.recent.make_contiguous())
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }
}
