use serde::{Deserialize, Serialize};

use super::volume::{gray_components, NEIGHBORS_6};
use super::{LabelVolume, Tissue};
use crate::error::{Error, Result};

/// Scalar values on the voxel grid of a [`LabelVolume`]. Node `(i, j, k)` sits
/// at `origin + (i, j, k) * spacing`.
///
/// After [`solve_laplace`], white matter holds 0, background holds 1 and gray
/// matter holds the harmonic interpolant; `mask` marks solved gray voxels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ScalarField {
    /// Samples `f` at every grid node with unit spacing and zero origin.
    pub fn from_fn(dims: [usize; 3], f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(i as f64, j as f64, k as f64));
                }
            }
        }
        let n = values.len();
        Self { dims, spacing: [1.0; 3], origin: [0.0; 3], values, mask: vec![true; n] }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn solved_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceOptions {
    pub omega: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self { omega: 1.9, tol: 1e-5, max_iter: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub solved_voxels: usize,
    /// Gray components lacking white matter or background contact; their
    /// voxels are set to the value of the interface they do touch (1 if none)
    /// so no isosurface passes through them.
    pub flagged_components: usize,
    pub flagged_voxels: usize,
}

/// Solves the discrete Laplace equation on gray matter with value 0 at white
/// matter and 1 at background, by red-black over-relaxation on the
/// spacing-weighted 6-neighbour stencil. Grid faces are insulating
/// (neighbours outside the volume are dropped from the stencil).
///
/// The residual is the largest Gauss-Seidel correction
/// `|sum_n w_n u_n / sum_n w_n - u|` over solved voxels.
pub fn solve_laplace(vol: &LabelVolume, opts: &LaplaceOptions) -> Result<(ScalarField, LaplaceReport)> {
    if !(opts.omega > 0.0 && opts.omega < 2.0) || !(opts.tol > 0.0) {
        return Err(Error::Config(format!("invalid Laplace options {opts:?}")));
    }
    let [nx, ny, nz] = vol.dims;
    let n = vol.labels.len();
    let mut values: Vec<f64> = vol
        .labels
        .iter()
        .map(|&l| match Tissue::from_u8(l) {
            Some(Tissue::White) => 0.0,
            _ => 1.0,
        })
        .collect();
    let mut mask = vec![false; n];
    let mut report = LaplaceReport {
        iterations: 0,
        residual: 0.0,
        converged: true,
        solved_voxels: 0,
        flagged_components: 0,
        flagged_voxels: 0,
    };
    for c in gray_components(vol, &NEIGHBORS_6) {
        if c.touches_white && c.touches_background {
            for &v in &c.voxels {
                mask[v] = true;
                values[v] = 0.5;
            }
            report.solved_voxels += c.voxels.len();
        } else {
            let fill = if c.touches_white && !c.touches_background { 0.0 } else { 1.0 };
            for &v in &c.voxels {
                values[v] = fill;
            }
            report.flagged_components += 1;
            report.flagged_voxels += c.voxels.len();
        }
    }
    if report.flagged_components > 0 {
        log::warn!(
            "{} gray-matter component(s) ({} voxels) touch only one boundary and are excluded",
            report.flagged_components,
            report.flagged_voxels
        );
    }
    let field = |values, mask| ScalarField { dims: vol.dims, spacing: vol.spacing, origin: vol.voxel_center(0, 0, 0).to_array(), values, mask };
    if report.solved_voxels == 0 {
        log::warn!("no gray matter between white matter and background; field is empty");
        return Ok((field(values, mask), report));
    }

    let w = [1.0 / (vol.spacing[0] * vol.spacing[0]), 1.0 / (vol.spacing[1] * vol.spacing[1]), 1.0 / (vol.spacing[2] * vol.spacing[2])];
    // Solved voxels split by parity of i + j + k, each with its stencil.
    struct Cell {
        v: usize,
        nbrs: [usize; 6],
        wts: [f64; 6],
        inv_sum: f64,
    }
    let mut colors: [Vec<Cell>; 2] = [Vec::new(), Vec::new()];
    for v in (0..n).filter(|&v| mask[v]) {
        let (i, j, k) = (v % nx, (v / nx) % ny, v / (nx * ny));
        let mut cell = Cell { v, nbrs: [v; 6], wts: [0.0; 6], inv_sum: 0.0 };
        let mut sum = 0.0;
        for (slot, d) in NEIGHBORS_6.iter().enumerate() {
            let axis = slot / 2;
            let (a, b, c) = (i as i64 + d[0], j as i64 + d[1], k as i64 + d[2]);
            if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                continue;
            }
            cell.nbrs[slot] = a as usize + nx * (b as usize + ny * c as usize);
            cell.wts[slot] = w[axis];
            sum += w[axis];
        }
        cell.inv_sum = 1.0 / sum;
        colors[(i + j + k) % 2].push(cell);
    }

    report.converged = false;
    for it in 1..=opts.max_iter {
        let mut max_res: f64 = 0.0;
        for color in &colors {
            for c in color {
                let mut acc = 0.0;
                for s in 0..6 {
                    acc += c.wts[s] * values[c.nbrs[s]];
                }
                let delta = acc * c.inv_sum - values[c.v];
                max_res = max_res.max(delta.abs());
                values[c.v] += opts.omega * delta;
            }
        }
        report.iterations = it;
        report.residual = max_res;
        if max_res <= opts.tol {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        return Err(Error::Numeric(format!(
            "Laplace solver did not converge in {} iterations (residual {:.3e} > {:.1e})",
            opts.max_iter, report.residual, opts.tol
        )));
    }
    // Over-relaxation can overshoot by less than the tolerance.
    for (v, m) in values.iter_mut().zip(&mask) {
        if *m {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Ok((field(values, mask), report))
}
