//! Small raster helpers over interleaved `height x width x channels` frames.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FrameShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn center(&self) -> (f64, f64) {
        (
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }
}

/// Bilinear sample at `(x, y)` with edge replication.
pub(crate) fn sample(src: &[f32], shape: FrameShape, x: f64, y: f64, out: &mut [f32]) {
    let FrameShape {
        height,
        width,
        channels,
    } = shape;
    let x0f = libm::floor(x);
    let y0f = libm::floor(y);
    let (fx, fy) = (x - x0f, y - y0f);
    let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
    let (x0, x1) = (clamp(x0f, width), clamp(x0f + 1.0, width));
    let (y0, y1) = (clamp(y0f, height), clamp(y0f + 1.0, height));
    let px = |xx: usize, yy: usize, c: usize| src[(yy * width + xx) * channels + c] as f64;
    for (c, o) in out.iter_mut().enumerate() {
        let top = px(x0, y0, c) * (1.0 - fx) + px(x1, y0, c) * fx;
        let bottom = px(x0, y1, c) * (1.0 - fx) + px(x1, y1, c) * fx;
        *o = (top * (1.0 - fy) + bottom * fy) as f32;
    }
}

/// Resample through an inverse map: output pixel `p` reads source
/// `inv(p - center) + center + src_shift`.
pub(crate) fn warp(
    src: &[f32],
    shape: FrameShape,
    inv: [[f64; 2]; 2],
    src_shift: (f64, f64),
) -> Vec<f32> {
    let (cx, cy) = shape.center();
    let mut out = alloc::vec![0.0f32; shape.len()];
    let k = shape.channels;
    for y in 0..shape.height {
        for x in 0..shape.width {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = inv[0][0] * dx + inv[0][1] * dy + cx + src_shift.0;
            let sy = inv[1][0] * dx + inv[1][1] * dy + cy + src_shift.1;
            let at = (y * shape.width + x) * k;
            sample(src, shape, sx, sy, &mut out[at..at + k]);
        }
    }
    out
}

pub(crate) fn clamp_unit(frame: &mut [f32]) {
    for v in frame {
        *v = v.clamp(0.0, 1.0);
    }
}

fn wrap(x: f64, m: f64) -> f64 {
    x - libm::floor(x / m) * m
}

pub(crate) fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        wrap((g - b) / d, 6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

pub(crate) fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = wrap(h, 1.0) * 6.0;
    let i = libm::floor(h6);
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}
