use serde::{Deserialize, Serialize};

use super::Tissue;
use crate::image::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentOptions {
    pub iterations: usize,
    pub smoothing: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Box-filter radius (pixels) applied before the white/gray threshold.
    pub split_radius: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { iterations: 60, smoothing: 1, lambda1: 1.0, lambda2: 1.0, split_radius: 2 }
    }
}

/// Morphological Chan-Vese active contour without edges. Returns a binary
/// phase per pixel; which phase is "inside" depends on the initial
/// checkerboard and carries no meaning on its own.
pub fn morphological_chan_vese(img: &GrayImage, opts: &SegmentOptions) -> Vec<bool> {
    let (w, h) = (img.width, img.height);
    let mut u: Vec<bool> = (0..w * h).map(|p| ((p % w) / 5 + (p / w) / 5) % 2 == 1).collect();
    let mut flip = false;
    for _ in 0..opts.iterations {
        let (mut s1, mut n1, mut s0, mut n0) = (0.0f64, 0usize, 0.0f64, 0usize);
        for (&v, &inside) in img.data.iter().zip(&u) {
            if inside {
                s1 += v as f64;
                n1 += 1;
            } else {
                s0 += v as f64;
                n0 += 1;
            }
        }
        let c1 = if n1 > 0 { s1 / n1 as f64 } else { 0.0 };
        let c0 = if n0 > 0 { s0 / n0 as f64 } else { 0.0 };
        let uf = |x: usize, y: usize| u[y * w + x] as i32 as f64;
        let mut next = u.clone();
        for y in 0..h {
            for x in 0..w {
                let gx = central(x, w, |i| uf(i, y));
                let gy = central(y, h, |j| uf(x, j));
                let grad = gx.abs() + gy.abs();
                if grad == 0.0 {
                    continue;
                }
                let v = img.get(x, y) as f64;
                let aux = grad * (opts.lambda1 * (v - c1).powi(2) - opts.lambda2 * (v - c0).powi(2));
                if aux < 0.0 {
                    next[y * w + x] = true;
                } else if aux > 0.0 {
                    next[y * w + x] = false;
                }
            }
        }
        u = next;
        for _ in 0..opts.smoothing {
            u = if flip { inf_sup(&sup_inf(&u, w, h), w, h) } else { sup_inf(&inf_sup(&u, w, h), w, h) };
            flip = !flip;
        }
    }
    u
}

fn central(i: usize, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 {
        f(1) - f(0)
    } else if i == n - 1 {
        f(n - 1) - f(n - 2)
    } else {
        0.5 * (f(i + 1) - f(i - 1))
    }
}

const LINES: [[(i64, i64); 2]; 4] = [[(-1, 0), (1, 0)], [(0, -1), (0, 1)], [(-1, -1), (1, 1)], [(-1, 1), (1, -1)]];

fn line_op(u: &[bool], w: usize, h: usize, erode: bool) -> Vec<bool> {
    let at = |x: i64, y: i64| u[(y.clamp(0, h as i64 - 1) as usize) * w + x.clamp(0, w as i64 - 1) as usize];
    (0..w * h)
        .map(|p| {
            let (x, y) = ((p % w) as i64, (p / w) as i64);
            let mut per_line = LINES.iter().map(|l| {
                let vals = [u[p], at(x + l[0].0, y + l[0].1), at(x + l[1].0, y + l[1].1)];
                if erode {
                    vals.iter().all(|&b| b)
                } else {
                    vals.iter().any(|&b| b)
                }
            });
            if erode {
                per_line.any(|b| b)
            } else {
                per_line.all(|b| b)
            }
        })
        .collect()
}

/// Supremum over line directions of line erosions.
fn sup_inf(u: &[bool], w: usize, h: usize) -> Vec<bool> {
    line_op(u, w, h, true)
}

/// Infimum over line directions of line dilations.
fn inf_sup(u: &[bool], w: usize, h: usize) -> Vec<bool> {
    line_op(u, w, h, false)
}

/// Otsu threshold of `values` (assumed in `[0, 1]`) over 256 bins.
pub(crate) fn otsu(values: &[f32]) -> f32 {
    let mut hist = [0usize; 256];
    for &v in values {
        hist[(v.clamp(0.0, 1.0) * 255.0).round() as usize] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut s0, mut best, mut thr) = (0.0, 0.0, -1.0, 0usize);
    for (i, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        s0 += i as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (s0 / w0, (sum_all - s0) / w1);
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best {
            best = between;
            thr = i;
        }
    }
    (thr as f32 + 0.5) / 255.0
}

/// Labels a section image as background / white matter / gray matter.
///
/// The tissue mask comes from [`morphological_chan_vese`]; the phase covering
/// most of the image border is background. Inside tissue, a box-filtered
/// intensity is split by Otsu's threshold and the class whose mean lies closer
/// to the background mean is taken as white matter (pale, cell-sparse).
pub fn segment_section(img: &GrayImage, opts: &SegmentOptions) -> Vec<u8> {
    let (w, h) = (img.width, img.height);
    let n = w * h;
    let mut out = vec![Tissue::Background as u8; n];
    if n == 0 {
        return out;
    }
    let (lo, hi) = img.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < 1e-6 {
        return out;
    }
    let phase = morphological_chan_vese(img, opts);
    let border: Vec<usize> = (0..n).filter(|&p| p % w == 0 || p % w == w - 1 || p / w == 0 || p / w == h - 1).collect();
    let inside_on_border = border.iter().filter(|&&p| phase[p]).count();
    let bg_phase = 2 * inside_on_border >= border.len();
    let tissue: Vec<bool> = phase.iter().map(|&p| p != bg_phase).collect();
    let n_tissue = tissue.iter().filter(|&&t| t).count();
    if n_tissue == 0 || n_tissue == n {
        return out;
    }
    let bg_mean = mean_where(&img.data, &tissue, false);
    let smooth = img.box_blur(opts.split_radius);
    let tvals: Vec<f32> = smooth.data.iter().zip(&tissue).filter(|(_, &t)| t).map(|(&v, _)| v).collect();
    let thr = otsu(&tvals);
    let above: Vec<bool> = smooth.data.iter().map(|&v| v > thr).collect();
    let mean_of = |want: bool| {
        let sel: Vec<bool> = (0..n).map(|p| tissue[p] && above[p] == want).collect();
        mean_where(&img.data, &sel, true)
    };
    let (m_hi, m_lo) = (mean_of(true), mean_of(false));
    let white_is_above = (m_hi - bg_mean).abs() < (m_lo - bg_mean).abs();
    for p in 0..n {
        if tissue[p] {
            out[p] = if above[p] == white_is_above { Tissue::White as u8 } else { Tissue::Gray as u8 };
        }
    }
    out
}

fn mean_where(data: &[f32], mask: &[bool], want: bool) -> f64 {
    let (s, c) = data.iter().zip(mask).filter(|(_, &m)| m == want).fold((0.0, 0usize), |(s, c), (&v, _)| (s + v as f64, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}
