//! Synthetic sequences: each base frame is extended into a short track of
//! jittered views ending with the unperturbed frame itself.

use alloc::vec::Vec;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::image::{clamp_unit, warp, FrameShape};
use super::{FrameDataset, SequenceDataset, SequenceProvenance};
use crate::error::{invalid, Result};
use crate::fusion::SequenceSample;
use crate::rng;

/// Per-frame perturbation ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    /// Max translation as a fraction of the frame width (and height).
    pub translate: f64,
    /// Max relative scale change.
    pub scale: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_sigma: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            translate: 0.1,
            scale: 0.1,
            noise_sigma: 0.02,
        }
    }
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        translate: 0.0,
        scale: 0.0,
        noise_sigma: 0.0,
    };

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.translate) && ok(self.scale) && ok(self.noise_sigma)) || self.scale >= 1.0 {
            return Err(invalid!(
                "jitter parameters must be non-negative (scale below 1): {self:?}"
            ));
        }
        Ok(())
    }
}

pub(crate) fn jitter_frame(
    frame: &[f32],
    shape: FrameShape,
    jitter: &Jitter,
    seed: u64,
) -> Vec<f32> {
    let mut r = rng::seeded(seed);
    let uniform = |r: &mut rng::Rng, a: f64| if a > 0.0 { r.random_range(-a..=a) } else { 0.0 };
    let dx = uniform(&mut r, jitter.translate * shape.width as f64);
    let dy = uniform(&mut r, jitter.translate * shape.height as f64);
    let s = 1.0 + uniform(&mut r, jitter.scale);
    let mut out = warp(frame, shape, [[1.0 / s, 0.0], [0.0, 1.0 / s]], (-dx, -dy));
    if jitter.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, jitter.noise_sigma).expect("validated sigma");
        for v in &mut out {
            *v += normal.sample(&mut r) as f32;
        }
        clamp_unit(&mut out);
    }
    out
}

/// Extend every frame of `ds` into a `t_len`-frame sequence. Frames
/// `0..t_len - 1` are jittered views (seeded per sample and frame), the last
/// frame is the base frame. Sequence `i` gets group id `i`.
pub fn synthesize_sequences(
    ds: &FrameDataset,
    t_len: usize,
    jitter: &Jitter,
    seed: u64,
) -> Result<SequenceDataset> {
    if t_len == 0 {
        return Err(invalid!("sequence length must be at least 1"));
    }
    jitter.validate()?;
    let shape = FrameShape {
        height: ds.height(),
        width: ds.width(),
        channels: ds.channels(),
    };
    let mut sequences = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let base = ds.frame(i);
        let mut frames = Vec::with_capacity(t_len);
        for t in 0..t_len - 1 {
            frames.push(jitter_frame(
                base,
                shape,
                jitter,
                rng::derive(seed, i as u64, t as u64),
            ));
        }
        frames.push(base.to_vec());
        sequences.push(SequenceSample::new(frames, ds.label(i), i as u64)?);
    }
    SequenceDataset::new(
        ds.height(),
        ds.width(),
        ds.channels(),
        ds.class_names().to_vec(),
        t_len,
        sequences,
        Some(SequenceProvenance {
            seed,
            jitter: *jitter,
        }),
    )
}
