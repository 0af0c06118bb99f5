use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::mirror as mirror_index;

/// Random patch transforms. Ranges are symmetric around the identity; a zero
/// range or probability disables the transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    /// Uniform random rotation in [0, 360) degrees.
    pub rotation: bool,
    /// Random horizontal and vertical flips, each with probability 0.5.
    pub mirror: bool,
    /// Maximum shift along each axis, in pixels.
    pub translate_px: f64,
    /// Intensity gain drawn from `[1 - s, 1 + s]`.
    pub intensity_scale: f64,
    /// Intensity offset drawn from `[-o, o]`.
    pub intensity_offset: f64,
    pub blur_prob: f64,
    pub blur_sigma_max: f64,
    pub sharpen_prob: f64,
    pub sharpen_amount_max: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            rotation: true,
            mirror: true,
            translate_px: 4.0,
            intensity_scale: 0.1,
            intensity_offset: 0.05,
            blur_prob: 0.2,
            blur_sigma_max: 1.0,
            sharpen_prob: 0.2,
            sharpen_amount_max: 0.5,
        }
    }
}

impl AugmentationConfig {
    pub fn none() -> Self {
        Self {
            rotation: false,
            mirror: false,
            translate_px: 0.0,
            intensity_scale: 0.0,
            intensity_offset: 0.0,
            blur_prob: 0.0,
            blur_sigma_max: 0.0,
            sharpen_prob: 0.0,
            sharpen_amount_max: 0.0,
        }
    }

    fn geometric(&self) -> bool {
        self.rotation || self.mirror || self.translate_px > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Flip left-right.
    Horizontal,
    /// Flip top-bottom.
    Vertical,
}

/// Flips a square row-major patch along `axis`.
pub fn mirror(patch: &[f32], side: usize, axis: Axis) -> Vec<f32> {
    let mut out = vec![0.0; patch.len()];
    for y in 0..side {
        for x in 0..side {
            let (sx, sy) = match axis {
                Axis::Horizontal => (side - 1 - x, y),
                Axis::Vertical => (x, side - 1 - y),
            };
            out[y * side + x] = patch[sy * side + sx];
        }
    }
    out
}

/// Applies a random draw of the configured transforms to a square patch.
/// The result has the same shape with values clamped to [0, 1].
pub fn augment(patch: &[f32], side: usize, cfg: &AugmentationConfig, rng: &mut impl Rng) -> Vec<f32> {
    debug_assert_eq!(patch.len(), side * side);
    let mut out = if cfg.geometric() { warp(patch, side, cfg, rng) } else { patch.to_vec() };

    if cfg.intensity_scale > 0.0 || cfg.intensity_offset > 0.0 {
        let a = 1.0 + symmetric(rng, cfg.intensity_scale);
        let b = symmetric(rng, cfg.intensity_offset);
        out.iter_mut().for_each(|v| *v = (*v as f64 * a + b) as f32);
    }
    if cfg.blur_prob > 0.0 && cfg.blur_sigma_max > 0.0 && rng.random_bool(cfg.blur_prob.min(1.0)) {
        let sigma = rng.random_range(0.25..=cfg.blur_sigma_max.max(0.25));
        out = gaussian_blur(&out, side, sigma);
    }
    if cfg.sharpen_prob > 0.0 && cfg.sharpen_amount_max > 0.0 && rng.random_bool(cfg.sharpen_prob.min(1.0)) {
        let amount = rng.random_range(0.0..=cfg.sharpen_amount_max) as f32;
        let smooth = gaussian_blur(&out, side, 1.0);
        out.iter_mut().zip(&smooth).for_each(|(v, s)| *v += amount * (*v - s));
    }
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    out
}

fn symmetric(rng: &mut impl Rng, r: f64) -> f64 {
    if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 }
}

/// Rotation about the patch centre, optional flips and a shift; bilinear
/// sampling with mirrored borders.
fn warp(patch: &[f32], side: usize, cfg: &AugmentationConfig, rng: &mut impl Rng) -> Vec<f32> {
    let theta = if cfg.rotation { rng.random_range(0.0..std::f64::consts::TAU) } else { 0.0 };
    let (fx, fy) = if cfg.mirror { (rng.random_bool(0.5), rng.random_bool(0.5)) } else { (false, false) };
    let (tx, ty) = (symmetric(rng, cfg.translate_px), symmetric(rng, cfg.translate_px));
    let c = (side as f64 - 1.0) / 2.0;
    let (sin, cos) = theta.sin_cos();
    let at = |x: i64, y: i64| patch[mirror_index(y, side) * side + mirror_index(x, side)] as f64;
    let mut out = vec![0.0; patch.len()];
    for y in 0..side {
        for x in 0..side {
            let (mut dx, mut dy) = (x as f64 - c - tx, y as f64 - c - ty);
            let (rx, ry) = (cos * dx + sin * dy, -sin * dx + cos * dy);
            dx = if fx { -rx } else { rx };
            dy = if fy { -ry } else { ry };
            let (sx, sy) = (dx + c, dy + c);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (ax, ay) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let v = (1.0 - ay) * ((1.0 - ax) * at(x0, y0) + ax * at(x0 + 1, y0))
                + ay * ((1.0 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1));
            out[y * side + x] = v as f32;
        }
    }
    out
}

/// Separable Gaussian blur (radius 3 sigma) with mirrored borders.
pub fn gaussian_blur(patch: &[f32], side: usize, sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    let n = side as i64;
    let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
        let mut dst = vec![0.0; src.len()];
        for y in 0..n {
            for x in 0..n {
                let mut acc = 0.0;
                for (j, w) in (-r..=r).zip(&k) {
                    let (sx, sy) = if horizontal { (mirror_index(x + j, side), y as usize) } else { (x as usize, mirror_index(y + j, side)) };
                    acc += w * src[sy * side + sx] as f64;
                }
                dst[(y * n + x) as usize] = acc as f32;
            }
        }
        dst
    };
    pass(&pass(patch, true), false)
}
