//! Six corruption kinds with a linear severity scale; severity 0 is the
//! identity for every kind.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::image::{clamp_unit, hsv_to_rgb, rgb_to_hsv, warp, FrameShape};
use super::SequenceDataset;
use crate::error::{invalid, Error, Result};
use crate::metrics::EvalReport;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AugmentationKind {
    Rotation,
    HueShift,
    MotionBlur,
    GaussianNoise,
    Brightness,
    Occlusion,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 6] = [
        Self::Rotation,
        Self::HueShift,
        Self::MotionBlur,
        Self::GaussianNoise,
        Self::Brightness,
        Self::Occlusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rotation => "rotation",
            Self::HueShift => "hue_shift",
            Self::MotionBlur => "motion_blur",
            Self::GaussianNoise => "gaussian_noise",
            Self::Brightness => "brightness",
            Self::Occlusion => "occlusion",
        }
    }

    /// Parameter value at severity 0 and at max severity.
    pub fn range(self) -> (f64, f64) {
        match self {
            Self::Rotation => (0.0, 180.0),
            Self::HueShift => (0.0, 0.5),
            Self::MotionBlur => (1.0, 15.0),
            Self::GaussianNoise => (0.0, 0.3),
            Self::Brightness => (0.0, 0.5),
            Self::Occlusion => (0.0, 0.6),
        }
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid!("unknown augmentation kind '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    pub severity: u32,
    pub max_severity: u32,
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind, severity: u32, max_severity: u32) -> Result<Self> {
        if max_severity == 0 || severity > max_severity {
            return Err(invalid!(
                "severity {severity} outside 0..={max_severity} (max must be positive)"
            ));
        }
        Ok(Self {
            kind,
            severity,
            max_severity,
        })
    }

    /// The kind's parameter, linear in severity.
    pub fn magnitude(&self) -> f64 {
        let (lo, hi) = self.kind.range();
        lo + (hi - lo) * self.severity as f64 / self.max_severity as f64
    }
}

pub fn apply_augmentation(
    frame: &[f32],
    shape: FrameShape,
    spec: &AugmentationSpec,
    seed: u64,
) -> Result<Vec<f32>> {
    if frame.len() != shape.len() {
        return Err(Error::DimensionMismatch {
            expected: shape.len(),
            found: frame.len(),
        });
    }
    let spec = AugmentationSpec::new(spec.kind, spec.severity, spec.max_severity)?;
    if spec.severity == 0 {
        return Ok(frame.to_vec());
    }
    let mag = spec.magnitude();
    let mut r = rng::seeded(seed);
    let mut out = match spec.kind {
        AugmentationKind::Rotation => rotate(frame, shape, mag),
        AugmentationKind::HueShift => hue_shift(frame, shape, mag),
        AugmentationKind::MotionBlur => motion_blur(frame, shape, libm::round(mag) as usize),
        AugmentationKind::GaussianNoise => {
            let normal = Normal::new(0.0, mag).map_err(|e| invalid!("noise sigma: {e}"))?;
            frame
                .iter()
                .map(|&v| v + normal.sample(&mut r) as f32)
                .collect()
        }
        AugmentationKind::Brightness => {
            let offset = if r.random::<bool>() { mag } else { -mag } as f32;
            frame.iter().map(|&v| v + offset).collect()
        }
        AugmentationKind::Occlusion => occlude(frame, shape, mag, &mut r),
    };
    clamp_unit(&mut out);
    Ok(out)
}

fn rotate(frame: &[f32], shape: FrameShape, degrees: f64) -> Vec<f32> {
    let a = degrees.to_radians();
    let (s, c) = (libm::sin(a), libm::cos(a));
    // inverse rotation maps output pixels back to source
    warp(frame, shape, [[c, s], [-s, c]], (0.0, 0.0))
}

fn hue_shift(frame: &[f32], shape: FrameShape, shift: f64) -> Vec<f32> {
    if shape.channels != 3 {
        return frame.to_vec();
    }
    let mut out = Vec::with_capacity(frame.len());
    for px in frame.chunks_exact(3) {
        let (h, s, v) = rgb_to_hsv(px[0] as f64, px[1] as f64, px[2] as f64);
        let (r, g, b) = hsv_to_rgb(h + shift, s, v);
        out.extend([r as f32, g as f32, b as f32]);
    }
    out
}

/// Horizontal box blur of `length` taps centered on each pixel, edges replicated.
fn motion_blur(frame: &[f32], shape: FrameShape, length: usize) -> Vec<f32> {
    let FrameShape {
        height,
        width,
        channels,
    } = shape;
    let half = length as isize / 2;
    let start = -half;
    let end = start + length as isize;
    let mut out = Vec::with_capacity(frame.len());
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                let mut acc = 0.0f64;
                for dx in start..end {
                    let xx = (x as isize + dx).clamp(0, width as isize - 1) as usize;
                    acc += frame[(y * width + xx) * channels + c] as f64;
                }
                out.push((acc / length as f64) as f32);
            }
        }
    }
    out
}

fn occlude(frame: &[f32], shape: FrameShape, fraction: f64, r: &mut rng::Rng) -> Vec<f32> {
    let side = libm::round(fraction * shape.height.min(shape.width) as f64) as usize;
    let mut out = frame.to_vec();
    if side == 0 {
        return out;
    }
    let y0 = r.random_range(0..=shape.height - side);
    let x0 = r.random_range(0..=shape.width - side);
    for y in y0..y0 + side {
        let row = (y * shape.width + x0) * shape.channels;
        out[row..row + side * shape.channels].fill(0.0);
    }
    out
}

/// Augment every frame; frame `(i, t)` is seeded by `derive(seed, i, t)`.
pub fn augment_sequences(
    ds: &SequenceDataset,
    spec: &AugmentationSpec,
    seed: u64,
) -> Result<SequenceDataset> {
    let shape = FrameShape {
        height: ds.height,
        width: ds.width,
        channels: ds.channels,
    };
    ds.map_frames(|i, t, frame| {
        apply_augmentation(frame, shape, spec, rng::derive(seed, i as u64, t as u64))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub kind: AugmentationKind,
    pub severity: u32,
    pub report: EvalReport,
}

/// Evaluate every `(kind, severity)` cell in kind-then-ascending-severity
/// order. `severities` must be strictly ascending, start at 0 and end at or
/// below `max_severity`.
pub fn severity_sweep<F>(
    ds: &SequenceDataset,
    kinds: &[AugmentationKind],
    severities: &[u32],
    max_severity: u32,
    seed: u64,
    mut evaluate: F,
) -> Result<Vec<SweepCell>>
where
    F: FnMut(&SequenceDataset) -> Result<EvalReport>,
{
    if severities.first() != Some(&0) || !severities.windows(2).all(|w| w[0] < w[1]) {
        return Err(invalid!(
            "severities must be strictly ascending and start at 0"
        ));
    }
    if *severities.last().expect("non-empty") > max_severity {
        return Err(invalid!("severity above max_severity {max_severity}"));
    }
    let mut cells = Vec::with_capacity(kinds.len() * severities.len());
    let mut baseline = None;
    for &kind in kinds {
        for &severity in severities {
            let report = if severity == 0 {
                match &baseline {
                    Some(r) => Clone::clone(r),
                    None => {
                        let r = evaluate(ds)?;
                        baseline = Some(r.clone());
                        r
                    }
                }
            } else {
                let spec = AugmentationSpec::new(kind, severity, max_severity)?;
                evaluate(&augment_sequences(ds, &spec, seed)?)?
            };
            cells.push(SweepCell {
                kind,
                severity,
                report,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SHAPE: FrameShape = FrameShape {
        height: 9,
        width: 9,
        channels: 3,
    };

    fn textured() -> Vec<f32> {
        let mut r = rng::seeded(1);
        (0..SHAPE.len())
            .map(|_| r.random_range(0.0f32..1.0))
            .collect()
    }

    #[test]
    fn severity_zero_is_bitwise_identity() {
        let f = textured();
        for kind in AugmentationKind::ALL {
            let spec = AugmentationSpec::new(kind, 0, 5).unwrap();
            assert_eq!(
                apply_augmentation(&f, SHAPE, &spec, 7).unwrap(),
                f,
                "{kind}"
            );
        }
    }

    #[test]
    fn noise_is_unbiased() {
        let shape = FrameShape {
            height: 100,
            width: 100,
            channels: 1,
        };
        let f = alloc::vec![0.5f32; shape.len()];
        let spec = AugmentationSpec::new(AugmentationKind::GaussianNoise, 5, 5).unwrap();
        assert!((spec.magnitude() - 0.3).abs() < 1e-15);
        let out = apply_augmentation(&f, shape, &spec, 11).unwrap();
        let mean = out.iter().map(|&v| v as f64).sum::<f64>() / out.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn two_half_turns_restore_the_image() {
        // odd side keeps the rotation center on the pixel grid
        let mut f = alloc::vec![0.0f32; SHAPE.len()];
        for y in 0..9 {
            for x in 0..9 {
                for c in 0..3 {
                    f[(y * 9 + x) * 3 + c] = ((x * 7 + y * 3 + c) % 10) as f32 / 10.0;
                }
            }
        }
        let spec = AugmentationSpec::new(AugmentationKind::Rotation, 4, 4).unwrap();
        let once = apply_augmentation(&f, SHAPE, &spec, 0).unwrap();
        assert_ne!(once, f);
        let twice = apply_augmentation(&once, SHAPE, &spec, 0).unwrap();
        for (a, b) in twice.iter().zip(&f) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn magnitudes_span_the_ranges() {
        let at = |k, s| AugmentationSpec::new(k, s, 10).unwrap().magnitude();
        assert_eq!(at(AugmentationKind::Rotation, 10), 180.0);
        assert_eq!(at(AugmentationKind::MotionBlur, 0), 1.0);
        assert_eq!(at(AugmentationKind::MotionBlur, 10), 15.0);
        assert_eq!(at(AugmentationKind::HueShift, 5), 0.25);
        assert_eq!(at(AugmentationKind::Occlusion, 10), 0.6);
    }

    #[test]
    fn full_hue_shift_cycles() {
        let f = textured();
        let half = AugmentationSpec::new(AugmentationKind::HueShift, 1, 1).unwrap();
        let once = apply_augmentation(&f, SHAPE, &half, 0).unwrap();
        let twice = apply_augmentation(&once, SHAPE, &half, 0).unwrap();
        for (a, b) in twice.iter().zip(&f) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn occlusion_masks_a_square() {
        let f = alloc::vec![1.0f32; SHAPE.len()];
        let spec = AugmentationSpec::new(AugmentationKind::Occlusion, 5, 5).unwrap();
        let out = apply_augmentation(&f, SHAPE, &spec, 3).unwrap();
        let side = libm::round(0.6 * 9.0) as usize;
        assert_eq!(out.iter().filter(|&&v| v == 0.0).count(), side * side * 3);
    }

    #[test]
    fn blur_preserves_constant_rows() {
        let f = alloc::vec![0.3f32; SHAPE.len()];
        let spec = AugmentationSpec::new(AugmentationKind::MotionBlur, 3, 3).unwrap();
        let out = apply_augmentation(&f, SHAPE, &spec, 0).unwrap();
        assert!(out.iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn rejects_bad_specs_and_names() {
        assert!(AugmentationSpec::new(AugmentationKind::Rotation, 6, 5).is_err());
        assert!(AugmentationSpec::new(AugmentationKind::Rotation, 0, 0).is_err());
        assert!("blur".parse::<AugmentationKind>().is_err());
        for k in AugmentationKind::ALL {
            assert_eq!(k.name().parse::<AugmentationKind>().unwrap(), k);
        }
        let bad = AugmentationSpec {
            kind: AugmentationKind::Rotation,
            severity: 9,
            max_severity: 5,
        };
        assert!(apply_augmentation(&textured(), SHAPE, &bad, 0).is_err());
        let ok = AugmentationSpec::new(AugmentationKind::Rotation, 1, 5).unwrap();
        assert!(apply_augmentation(&[0.0; 3], SHAPE, &ok, 0).is_err());
    }

    proptest! {
        #[test]
        fn outputs_stay_in_unit_range(kind in 0usize..6, sev in 0u32..=5, seed: u64) {
            let spec = AugmentationSpec::new(AugmentationKind::ALL[kind], sev, 5).unwrap();
            let out = apply_augmentation(&textured(), SHAPE, &spec, seed).unwrap();
            prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(out.clone(), apply_augmentation(&textured(), SHAPE, &spec, seed).unwrap());
        }
    }
}
