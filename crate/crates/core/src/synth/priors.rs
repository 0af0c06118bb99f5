use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::phantom::PhantomDataset;
use crate::error::{Error, Result};
use crate::graph::{CortexGraph, NodeMatrix};

/// Width of the full-scale probabilistic-map vector.
pub const PADDED_PRIOR_DIM: usize = 152;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Standard deviation of the Gaussian blur of the one-hot area map.
    pub blur_um: f64,
    /// Standard deviation of the additive noise before clipping.
    pub noise: f64,
    /// Zero-pad h^P to [`PADDED_PRIOR_DIM`] entries.
    pub padded: bool,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { blur_um: 600.0, noise: 0.25, padded: false, seed: 0 }
    }
}

impl PriorConfig {
    /// Zero blur and zero noise: h^P is the exact one-hot label.
    pub fn perfect() -> Self {
        Self { blur_um: 0.0, noise: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blur_um >= 0.0) || !(self.noise >= 0.0) {
            return Err(Error::Config(format!("prior blur and noise must be non-negative, got {} and {}", self.blur_um, self.noise)));
        }
        Ok(())
    }
}

/// Sets labels, class count and border flags of graph nodes from the
/// phantom's ground truth. A node is a border node when its canonical
/// position lies within `border_um` of an area border.
pub fn annotate_graph(ds: &PhantomDataset, g: &mut CortexGraph, border_um: f64) -> Result<()> {
    check_sections(ds, g)?;
    g.num_classes = ds.config.areas;
    for u in 0..g.len() {
        let k = g.sections[u] as usize;
        let q = ds.canonical(k, g.coords[u]);
        g.labels[u] = Some(ds.area_at(k, q));
        g.border[u] = ds.border_distance(k, q) < border_um;
    }
    Ok(())
}

fn check_sections(ds: &PhantomDataset, g: &CortexGraph) -> Result<()> {
    if let Some(u) = (0..g.len()).find(|&u| g.sections[u] as usize >= ds.sections.len()) {
        return Err(Error::Input(format!("node {u} refers to section {} of {}", g.sections[u], ds.sections.len())));
    }
    Ok(())
}

/// Canonical position of a point given in section coordinates, mapped to
/// `[-1, 1]` per axis over the phantom's extent.
pub fn canonical_coordinates(ds: &PhantomDataset, k: usize, p: [f64; 2], z: f64) -> [f64; 3] {
    let c = &ds.config;
    let q = ds.canonical(k, p);
    let ext = [c.width as f64 * c.pixel_um, c.height as f64 * c.pixel_um, c.sections as f64 * c.thickness_um];
    let v = [q[0], q[1], z];
    std::array::from_fn(|i| (2.0 * v[i] / ext[i] - 1.0).clamp(-1.0, 1.0))
}

/// Synthetic priors for every node: h^P is the area one-hot blurred along
/// the band and across sections plus clipped noise, min-max rescaled per
/// dimension; h^C is the canonical position in `[-1, 1]^3`.
pub fn synth_priors(ds: &PhantomDataset, g: &CortexGraph, cfg: &PriorConfig) -> Result<(NodeMatrix, NodeMatrix)> {
    cfg.validate()?;
    check_sections(ds, g)?;
    let areas = ds.config.areas;
    let dim = if cfg.padded { PADDED_PRIOR_DIM.max(areas) } else { areas };
    let n = g.len();
    let taps = blur_taps(cfg.blur_um);
    let noise = Normal::new(0.0, cfg.noise).expect("finite noise");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9419);
    let mut pm = vec![0.0f64; n * areas];
    let mut co = NodeMatrix::zeros(n, 3);
    let layout = ds.config.layout();
    let depth = ds.sections.len() as f64 * ds.config.thickness_um;
    for u in 0..n {
        let k = g.sections[u] as usize;
        let q = ds.canonical(k, g.coords[u]);
        let z = ds.section_z(k);
        let row = &mut pm[u * areas..(u + 1) * areas];
        for &(dx, dz, w) in &taps {
            let a = layout.area(q[0] + dx, (z + dz).clamp(0.0, depth));
            row[a] += w;
        }
        if cfg.noise > 0.0 {
            for v in row.iter_mut() {
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        let c = canonical_coordinates(ds, k, g.coords[u], g.positions[u][2]);
        co.set_row(u, &c.map(|v| v as f32));
    }
    for a in 0..areas {
        let (lo, hi) = (0..n).map(|u| pm[u * areas + a]).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if hi > lo && (lo != 0.0 || hi != 1.0) {
            for u in 0..n {
                pm[u * areas + a] = (pm[u * areas + a] - lo) / (hi - lo);
            }
        }
    }
    let mut out = NodeMatrix::zeros(n, dim);
    let mut row = vec![0.0f32; dim];
    for u in 0..n {
        for a in 0..areas {
            row[a] = pm[u * areas + a] as f32;
        }
        out.set_row(u, &row);
    }
    Ok((out, co))
}

/// Normalised 2D Gaussian quadrature taps `(dx, dz, weight)` on a grid of
/// half-sigma spacing out to three sigma.
fn blur_taps(sigma: f64) -> Vec<(f64, f64, f64)> {
    if sigma <= 0.0 {
        return vec![(0.0, 0.0, 1.0)];
    }
    let r = 6i32;
    let mut taps = Vec::new();
    for i in -r..=r {
        for j in -r..=r {
            let (a, b) = (i as f64 * 0.5, j as f64 * 0.5);
            taps.push((a * sigma, b * sigma, (-(a * a + b * b) / 2.0).exp()));
        }
    }
    let total: f64 = taps.iter().map(|t| t.2).sum();
    taps.iter_mut().for_each(|t| t.2 /= total);
    taps
}
