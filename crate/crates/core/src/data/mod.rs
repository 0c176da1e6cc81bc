//! Frame and sequence containers plus the class-level dataset operations.

use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::fusion::SequenceSample;
use crate::rng;

pub mod augment;
mod image;
pub use image::FrameShape;
pub mod signs;
pub mod synth;

pub use augment::{
    apply_augmentation, augment_sequences, severity_sweep, AugmentationKind, AugmentationSpec,
    SweepCell,
};
pub use signs::{generate_sign_dataset, SignDatasetConfig};
pub use synth::{synthesize_sequences, Jitter};

/// Labeled single frames, each `height x width x channels` (interleaved
/// channels, row-major) with pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDataset {
    height: usize,
    width: usize,
    channels: usize,
    class_names: Vec<String>,
    labels: Vec<usize>,
    pixels: Vec<f32>,
}

impl FrameDataset {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        class_names: Vec<String>,
        labels: Vec<usize>,
        pixels: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(invalid!(
                "frame shape {height}x{width}x{channels} has a zero dimension"
            ));
        }
        if class_names.is_empty() {
            return Err(invalid!("dataset has no classes"));
        }
        let frame_len = height * width * channels;
        if pixels.len() != labels.len() * frame_len {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * frame_len,
                found: pixels.len(),
            });
        }
        let classes = class_names.len();
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(invalid!(
                "record {i}: label {l} out of range for {classes} classes"
            ));
        }
        if let Some(p) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid!(
                "record {}: pixel value {} outside [0, 1]",
                p / frame_len,
                pixels[p]
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            class_names,
            labels,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let n = self.frame_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    /// Samples at `indices`, in that order, with the same label space.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let n = self.frame_len();
        let mut pixels = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            pixels.extend_from_slice(self.frame(i));
        }
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            class_names: self.class_names.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            pixels,
        }
    }

    /// Keep samples whose class is in `kept` (old indices) and relabel
    /// densely in `kept` order.
    fn relabel(&self, kept: &[usize]) -> Self {
        let mut new_index = alloc::vec![None; self.num_classes()];
        for (new, &old) in kept.iter().enumerate() {
            new_index[old] = Some(new);
        }
        let indices: Vec<usize> = (0..self.len())
            .filter(|&i| new_index[self.labels[i]].is_some())
            .collect();
        let mut out = self.subset(&indices);
        out.labels = indices
            .iter()
            .map(|&i| new_index[self.labels[i]].unwrap())
            .collect();
        out.class_names = kept.iter().map(|&c| self.class_names[c].clone()).collect();
        out
    }
}

/// Maps filtered (dense) class indices back to the source label space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    /// `kept[new] = old`.
    pub kept: Vec<usize>,
}

impl ClassMap {
    pub fn to_new(&self, old: usize) -> Option<usize> {
        self.kept.iter().position(|&c| c == old)
    }
}

/// Classes whose `counts` lie in `[min_count, max_count]`.
pub fn classes_in_count_range(
    counts: &[usize],
    min_count: usize,
    max_count: Option<usize>,
) -> Vec<usize> {
    (0..counts.len())
        .filter(|&c| counts[c] >= min_count && max_count.is_none_or(|m| counts[c] <= m))
        .collect()
}

/// Drop classes with fewer than `min_count` or more than `max_count`
/// samples, re-indexing the survivors densely.
pub fn filter_classes(
    ds: &FrameDataset,
    min_count: usize,
    max_count: Option<usize>,
) -> Result<(FrameDataset, ClassMap)> {
    let kept = classes_in_count_range(&ds.class_counts(), min_count, max_count);
    if kept.is_empty() {
        return Err(invalid!(
            "every class was filtered out (min {min_count}, max {max_count:?})"
        ));
    }
    Ok((ds.relabel(&kept), ClassMap { kept }))
}

/// Remove the named classes from the label space entirely; their samples
/// become the out-of-distribution set (labelled within the held-out names).
pub fn holdout_ood_classes(
    ds: &FrameDataset,
    names: &[&str],
) -> Result<(FrameDataset, FrameDataset)> {
    let mut held = Vec::with_capacity(names.len());
    for &name in names {
        let c = ds
            .class_index(name)
            .ok_or_else(|| Error::UnknownClass(name.into()))?;
        if !held.contains(&c) {
            held.push(c);
        }
    }
    let kept: Vec<usize> = (0..ds.num_classes())
        .filter(|c| !held.contains(c))
        .collect();
    if kept.is_empty() {
        return Err(invalid!(
            "holding out every class leaves no in-distribution data"
        ));
    }
    let in_dist = ds.relabel(&kept);
    let ood = if held.is_empty() {
        FrameDataset {
            class_names: ds.class_names.clone(),
            labels: Vec::new(),
            pixels: Vec::new(),
            ..ds.clone()
        }
    } else {
        ds.relabel(&held)
    };
    Ok((in_dist, ood))
}

/// Which part of a split a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

/// A subset carrying its provenance: the source indices it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub role: SplitRole,
    pub dataset: FrameDataset,
    pub source_indices: Vec<usize>,
}

impl Split {
    pub fn overlaps(&self, other: &Split) -> bool {
        let mut a = self.source_indices.clone();
        a.sort_unstable();
        other
            .source_indices
            .iter()
            .any(|i| a.binary_search(i).is_ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: Split,
    pub validation: Split,
    pub test: Split,
}

/// Stratified train / validation / test split. Within each class the samples
/// are shuffled from `seed`; `floor(n * val_fraction)` go to validation,
/// `floor(n * test_fraction)` to test, the rest to training.
pub fn split_dataset(
    ds: &FrameDataset,
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplits> {
    if !(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0) {
        return Err(invalid!(
            "split fractions {val_fraction}, {test_fraction} must be >= 0 and sum below 1"
        ));
    }
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); ds.num_classes()];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (c, idx) in by_class.iter_mut().enumerate() {
        idx.shuffle(&mut rng::seeded(rng::derive(seed, 0x5e11, c as u64)));
        let n = idx.len();
        let n_val = (n as f64 * val_fraction) as usize;
        let n_test = (n as f64 * test_fraction) as usize;
        val.extend_from_slice(&idx[..n_val]);
        test.extend_from_slice(&idx[n_val..n_val + n_test]);
        train.extend_from_slice(&idx[n_val + n_test..]);
    }
    for v in [&mut train, &mut val, &mut test] {
        v.sort_unstable();
    }
    let make = |role, source_indices: Vec<usize>| Split {
        role,
        dataset: ds.subset(&source_indices),
        source_indices,
    };
    Ok(DatasetSplits {
        train: make(SplitRole::Train, train),
        validation: make(SplitRole::Validation, val),
        test: make(SplitRole::Test, test),
    })
}

/// Optional minimum-size filter for real crops (fixed-size synthetic frames
/// always pass).
pub fn passes_min_crop_size(height: usize, width: usize, min_side: Option<usize>) -> bool {
    min_side.is_none_or(|m| height >= m && width >= m)
}

/// Sequences of equal length `t_len` sharing one frame shape and label space.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub class_names: Vec<String>,
    pub t_len: usize,
    pub sequences: Vec<SequenceSample>,
    /// Absent for sequences loaded from files.
    pub provenance: Option<SequenceProvenance>,
}

/// How a sequence dataset was generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceProvenance {
    pub seed: u64,
    pub jitter: Jitter,
}

impl SequenceDataset {
    /// Validating constructor.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        class_names: Vec<String>,
        t_len: usize,
        sequences: Vec<SequenceSample>,
        provenance: Option<SequenceProvenance>,
    ) -> Result<Self> {
        if t_len == 0 {
            return Err(invalid!("sequence length must be at least 1"));
        }
        let frame_len = height * width * channels;
        let mut ids: Vec<u64> = Vec::with_capacity(sequences.len());
        for (i, s) in sequences.iter().enumerate() {
            if s.frames().len() != t_len {
                return Err(invalid!(
                    "sequence {i} has {} frames, expected {t_len}",
                    s.frames().len()
                ));
            }
            if s.frames().iter().any(|f| f.len() != frame_len) {
                return Err(invalid!("sequence {i} has a frame of the wrong size"));
            }
            if s.label() >= class_names.len() {
                return Err(invalid!(
                    "record {i}: label {} out of range for {} classes",
                    s.label(),
                    class_names.len()
                ));
            }
            if s.frames()
                .iter()
                .flatten()
                .any(|v| !(0.0..=1.0).contains(v))
            {
                return Err(invalid!("record {i}: pixel value outside [0, 1]"));
            }
            ids.push(s.group_id());
        }
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid!("group ids are not unique"));
        }
        Ok(Self {
            height,
            width,
            channels,
            class_names,
            t_len,
            sequences,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    fn with_sequences(&self, sequences: Vec<SequenceSample>) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            class_names: self.class_names.clone(),
            t_len: self.t_len,
            sequences,
            provenance: self.provenance,
        }
    }

    /// Sequences whose label is in `classes`, keeping the label space.
    pub fn filter_labels(&self, classes: &[usize]) -> Self {
        self.with_sequences(
            self.sequences
                .iter()
                .filter(|s| classes.contains(&s.label()))
                .cloned()
                .collect(),
        )
    }

    /// Shift every group id by `offset`.
    pub fn with_group_offset(&self, offset: u64) -> Result<Self> {
        let mut out = Vec::with_capacity(self.len());
        for s in &self.sequences {
            let id = s
                .group_id()
                .checked_add(offset)
                .ok_or_else(|| invalid!("group id overflow"))?;
            out.push(SequenceSample::new(s.frames().to_vec(), s.label(), id)?);
        }
        Ok(self.with_sequences(out))
    }

    /// The first `n` sequences.
    pub fn truncated(&self, n: usize) -> Self {
        self.with_sequences(self.sequences.iter().take(n).cloned().collect())
    }

    /// At most `n` sequences taken at evenly spaced indices, so a class-major
    /// dataset keeps its class mix.
    pub fn strided(&self, n: usize) -> Self {
        let len = self.len();
        if n >= len {
            return self.clone();
        }
        let picked = (0..n)
            .map(|k| self.sequences[k * len / n].clone())
            .collect();
        self.with_sequences(picked)
    }

    /// Same metadata, frames replaced by `f(sequence index, frame index, frame)`.
    pub fn map_frames<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, &[f32]) -> Result<Vec<f32>>,
    {
        let mut out = Vec::with_capacity(self.len());
        for (i, s) in self.sequences.iter().enumerate() {
            let frames = s
                .frames()
                .iter()
                .enumerate()
                .map(|(t, fr)| f(i, t, fr))
                .collect::<Result<Vec<_>>>()?;
            out.push(SequenceSample::new(frames, s.label(), s.group_id())?);
        }
        Ok(self.with_sequences(out))
    }
}
