//! Synthetic sign-like glyphs: a colored shape with an optional inner mark on
//! a noisy background, drawn with long-tailed class frequencies.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::FrameDataset;
use crate::error::{invalid, Result};
use crate::rng;

const SHAPES: [&str; 4] = ["circle", "triangle", "square", "diamond"];
const MARKS: [&str; 3] = ["plain", "bar", "dot"];
const COLORS: [(&str, [f64; 3]); 5] = [
    ("red", [0.85, 0.12, 0.10]),
    ("blue", [0.10, 0.25, 0.85]),
    ("yellow", [0.90, 0.80, 0.10]),
    ("green", [0.10, 0.65, 0.20]),
    ("white", [0.92, 0.92, 0.92]),
];
/// Distinct (shape, mark, color) triples reachable by [`glyph`].
pub const MAX_CLASSES: usize = 60;
const SUPERSAMPLE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SignDatasetConfig {
    pub num_classes: usize,
    /// Class `c` gets `max_per_class * (c + 1)^-tail_exponent` samples.
    pub tail_exponent: f64,
    pub max_per_class: usize,
    pub min_per_class: usize,
    /// Frame side length in pixels.
    pub size: usize,
    pub background_noise: f64,
    /// Max absolute per-channel perturbation of the glyph color.
    pub color_jitter: f64,
    /// Max glyph-center offset as a fraction of the side.
    pub position_jitter: f64,
    pub seed: u64,
}

impl Default for SignDatasetConfig {
    fn default() -> Self {
        Self {
            num_classes: 20,
            tail_exponent: 1.0,
            max_per_class: 2000,
            min_per_class: 8,
            size: 12,
            background_noise: 0.08,
            color_jitter: 0.12,
            position_jitter: 0.08,
            seed: 0,
        }
    }
}

impl SignDatasetConfig {
    pub fn class_counts(&self) -> Vec<usize> {
        (0..self.num_classes)
            .map(|c| {
                let n = self.max_per_class as f64 * libm::pow(c as f64 + 1.0, -self.tail_exponent);
                (libm::round(n) as usize).max(self.min_per_class)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_classes > MAX_CLASSES {
            return Err(invalid!(
                "num_classes must be in 1..={MAX_CLASSES}, got {}",
                self.num_classes
            ));
        }
        if self.size < 4 {
            return Err(invalid!("frame size must be at least 4, got {}", self.size));
        }
        if self.max_per_class == 0 || self.min_per_class > self.max_per_class {
            return Err(invalid!("need 0 < min_per_class <= max_per_class"));
        }
        for (name, v) in [
            ("tail_exponent", self.tail_exponent),
            ("background_noise", self.background_noise),
            ("color_jitter", self.color_jitter),
            ("position_jitter", self.position_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

/// (shape, mark, color) indices for class `c`; injective on `0..MAX_CLASSES`.
fn glyph(c: usize) -> (usize, usize, usize) {
    (
        c % SHAPES.len(),
        c % MARKS.len(),
        (c / SHAPES.len()) % COLORS.len(),
    )
}

pub fn class_name(c: usize) -> String {
    let (s, m, k) = glyph(c);
    format!("{}_{}_{}", SHAPES[s], COLORS[k].0, MARKS[m])
}

fn inside_shape(shape: usize, u: f64, v: f64) -> bool {
    match shape {
        0 => u * u + v * v <= 1.0,
        1 => v <= 0.8 && u.abs() <= (v + 1.0) / 1.8,
        2 => u.abs() <= 0.8 && v.abs() <= 0.8,
        _ => u.abs() + v.abs() <= 1.0,
    }
}

fn inside_mark(mark: usize, u: f64, v: f64) -> bool {
    match mark {
        1 => v.abs() <= 0.16 && u.abs() <= 0.55,
        2 => u * u + v * v <= 0.09,
        _ => false,
    }
}

fn render(cfg: &SignDatasetConfig, class: usize, seed: u64) -> Vec<f32> {
    let mut r = rng::seeded(seed);
    let (shape, mark, color) = glyph(class);
    let s = cfg.size as f64;
    let jit = |r: &mut rng::Rng, a: f64| if a > 0.0 { r.random_range(-a..=a) } else { 0.0 };
    let cx = (s - 1.0) / 2.0 + jit(&mut r, cfg.position_jitter * s);
    let cy = (s - 1.0) / 2.0 + jit(&mut r, cfg.position_jitter * s);
    let radius = s * r.random_range(0.34..=0.44);
    let mut fill = COLORS[color].1;
    for ch in &mut fill {
        *ch = (*ch + jit(&mut r, cfg.color_jitter)).clamp(0.0, 1.0);
    }
    let ink = [0.08, 0.08, 0.08];
    let bg_level: f64 = r.random_range(0.25..=0.6);
    let bg_tint: [f64; 3] = core::array::from_fn(|_| jit(&mut r, 0.08));
    let noise =
        Normal::new(0.0, cfg.background_noise.max(f64::MIN_POSITIVE)).expect("finite sigma");

    let mut out = Vec::with_capacity(cfg.size * cfg.size * 3);
    let sub = SUPERSAMPLE as f64;
    for y in 0..cfg.size {
        for x in 0..cfg.size {
            let mut cover = [0.0f64; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 - 0.5 + (sx as f64 + 0.5) / sub;
                    let py = y as f64 - 0.5 + (sy as f64 + 0.5) / sub;
                    let (u, v) = ((px - cx) / radius, (py - cy) / radius);
                    let slot = if !inside_shape(shape, u, v) {
                        0
                    } else if inside_mark(mark, u, v) {
                        2
                    } else {
                        1
                    };
                    cover[slot] += 1.0 / (sub * sub);
                }
            }
            for ch in 0..3 {
                let bg = bg_level + bg_tint[ch];
                let v = cover[0] * bg + cover[1] * fill[ch] + cover[2] * ink[ch];
                let n = if cfg.background_noise > 0.0 {
                    noise.sample(&mut r)
                } else {
                    0.0
                };
                out.push((v + n).clamp(0.0, 1.0) as f32);
            }
        }
    }
    out
}

/// Render the long-tailed dataset. Samples are class-major; sample `i`
/// is seeded by `derive(seed, i, 0)`.
pub fn generate_sign_dataset(cfg: &SignDatasetConfig) -> Result<FrameDataset> {
    cfg.validate()?;
    let counts = cfg.class_counts();
    let total: usize = counts.iter().sum();
    let mut labels = Vec::with_capacity(total);
    let mut pixels = Vec::with_capacity(total * cfg.size * cfg.size * 3);
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let i = labels.len() as u64;
            pixels.extend(render(cfg, c, rng::derive(cfg.seed, i, 0)));
            labels.push(c);
        }
    }
    let names = (0..cfg.num_classes).map(class_name).collect();
    FrameDataset::new(cfg.size, cfg.size, 3, names, labels, pixels)
}
