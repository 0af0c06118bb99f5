use serde::{Deserialize, Serialize};

use super::RigidTransform2D;
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Voxel class. Discriminants are the on-disk byte values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tissue {
    Background = 0,
    White = 1,
    Gray = 2,
}

impl Tissue {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Tissue::Background),
            1 => Some(Tissue::White),
            2 => Some(Tissue::Gray),
            _ => None,
        }
    }
}

/// Labelled voxel grid. Axis 2 runs over sections; voxel `(i, j, k)` has its
/// centre at `((i + 0.5) sx, (j + 0.5) sy, (k + 0.5) sz)` in the volume frame.
///
/// `transforms[k]` maps volume-frame in-plane micrometres to section `k`'s
/// image frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelVolume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub labels: Vec<u8>,
    pub transforms: Vec<RigidTransform2D>,
    pub missing: Vec<bool>,
}

/// One input slice for [`reconstruct_stack`]; `labels` is row-major
/// `height x width` in [`Tissue`] codes, `None` for a missing section.
#[derive(Clone, Copy, Debug)]
pub struct StackSection<'a> {
    pub labels: Option<&'a [u8]>,
    pub transform: RigidTransform2D,
}

/// Geometry shared by all sections of a stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackGeometry {
    pub width: usize,
    pub height: usize,
    pub pixel_um: f64,
    pub thickness_um: f64,
    /// In-plane voxel size of the reconstructed volume.
    pub voxel_um: f64,
}

impl LabelVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], labels: Vec<u8>) -> Result<Self> {
        if labels.len() != dims.iter().product::<usize>() {
            return Err(Error::Input(format!("{} labels for dims {dims:?}", labels.len())));
        }
        if let Some(v) = labels.iter().find(|&&v| Tissue::from_u8(v).is_none()) {
            return Err(Error::Input(format!("unknown tissue code {v}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Input(format!("spacing must be positive, got {spacing:?}")));
        }
        Ok(Self {
            dims,
            spacing,
            labels,
            transforms: vec![RigidTransform2D::IDENTITY; dims[2]],
            missing: vec![false; dims[2]],
        })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Tissue {
        Tissue::from_u8(self.labels[self.index(i, j, k)]).unwrap_or(Tissue::Background)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            (i as f64 + 0.5) * self.spacing[0],
            (j as f64 + 0.5) * self.spacing[1],
            (k as f64 + 0.5) * self.spacing[2],
        )
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::new(
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        )
    }

    pub fn count(&self, t: Tissue) -> usize {
        self.labels.iter().filter(|&&v| v == t as u8).count()
    }

    /// Checks that every 26-connected gray-matter component touches both
    /// white matter and background.
    pub fn check(&self) -> VolumeCheck {
        let comps = gray_components(self, &NEIGHBORS_26);
        let mut check = VolumeCheck { gray_voxels: 0, components: comps.len(), issues: Vec::new() };
        for c in comps {
            check.gray_voxels += c.voxels.len();
            if !(c.touches_white && c.touches_background) {
                check.issues.push(ComponentIssue {
                    voxels: c.voxels.len(),
                    touches_white: c.touches_white,
                    touches_background: c.touches_background,
                    first_voxel: c.voxels[0],
                });
            }
        }
        check
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeCheck {
    pub gray_voxels: usize,
    pub components: usize,
    pub issues: Vec<ComponentIssue>,
}

impl VolumeCheck {
    pub fn is_well_formed(&self) -> bool {
        self.gray_voxels > 0 && self.issues.is_empty()
    }
}

/// A gray-matter component lacking one of its two interfaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentIssue {
    pub voxels: usize,
    pub touches_white: bool,
    pub touches_background: bool,
    pub first_voxel: usize,
}

pub(crate) struct GrayComponent {
    pub voxels: Vec<usize>,
    pub touches_white: bool,
    pub touches_background: bool,
}

pub(crate) const NEIGHBORS_6: [[i64; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

pub(crate) static NEIGHBORS_26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// Connected gray-matter components under the given neighbourhood.
pub(crate) fn gray_components(vol: &LabelVolume, nbrs: &[[i64; 3]]) -> Vec<GrayComponent> {
    let [nx, ny, nz] = vol.dims;
    let mut seen = vec![false; vol.labels.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..vol.labels.len() {
        if seen[start] || vol.labels[start] != Tissue::Gray as u8 {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = GrayComponent { voxels: Vec::new(), touches_white: false, touches_background: false };
        while let Some(v) = stack.pop() {
            comp.voxels.push(v);
            let (i, j, k) = ((v % nx) as i64, ((v / nx) % ny) as i64, (v / (nx * ny)) as i64);
            for d in nbrs {
                let (a, b, c) = (i + d[0], j + d[1], k + d[2]);
                if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                    continue;
                }
                let w = a as usize + nx * (b as usize + ny * c as usize);
                match Tissue::from_u8(vol.labels[w]) {
                    Some(Tissue::White) => comp.touches_white = true,
                    Some(Tissue::Background) => comp.touches_background = true,
                    _ => {
                        if !seen[w] {
                            seen[w] = true;
                            stack.push(w);
                        }
                    }
                }
            }
        }
        comp.voxels.sort_unstable();
        out.push(comp);
    }
    out
}

/// Builds a label volume from rigidly aligned sections.
///
/// Voxel `(i, j, k)` takes the label of section `k` at pixel
/// `transforms[k].apply(centre)`; coordinates falling outside the image read
/// as background. Missing sections copy the nearest valid section (the lower
/// one on ties) and are flagged in `missing`.
pub fn reconstruct_stack(sections: &[StackSection<'_>], geom: &StackGeometry) -> Result<LabelVolume> {
    if sections.is_empty() || sections.iter().all(|s| s.labels.is_none()) {
        return Err(Error::Input("all sections are missing".into()));
    }
    if geom.width == 0 || geom.height == 0 || !(geom.pixel_um > 0.0) || !(geom.voxel_um > 0.0) || !(geom.thickness_um > 0.0) {
        return Err(Error::Input(format!("invalid stack geometry {geom:?}")));
    }
    for (k, s) in sections.iter().enumerate() {
        if let Some(l) = s.labels {
            if l.len() != geom.width * geom.height {
                return Err(Error::Input(format!(
                    "section {k} has {} pixels, expected {}x{}",
                    l.len(),
                    geom.width,
                    geom.height
                )));
            }
        }
    }
    let nx = ((geom.width as f64 * geom.pixel_um) / geom.voxel_um).round().max(1.0) as usize;
    let ny = ((geom.height as f64 * geom.pixel_um) / geom.voxel_um).round().max(1.0) as usize;
    let nz = sections.len();
    let valid: Vec<usize> = (0..nz).filter(|&k| sections[k].labels.is_some()).collect();
    let mut labels = vec![Tissue::Background as u8; nx * ny * nz];
    for k in 0..nz {
        let src = valid.iter().copied().min_by_key(|&v| (v.abs_diff(k), v)).expect("nonempty");
        let img = sections[src].labels.expect("valid section");
        // The section supplying pixels determines the transform used.
        let t = sections[src].transform;
        for j in 0..ny {
            for i in 0..nx {
                let q = [(i as f64 + 0.5) * geom.voxel_um, (j as f64 + 0.5) * geom.voxel_um];
                let s = t.apply(q);
                let (px, py) = ((s[0] / geom.pixel_um).floor(), (s[1] / geom.pixel_um).floor());
                if px >= 0.0 && py >= 0.0 && (px as usize) < geom.width && (py as usize) < geom.height {
                    labels[i + nx * (j + ny * k)] = img[py as usize * geom.width + px as usize];
                }
            }
        }
    }
    let mut vol = LabelVolume::new([nx, ny, nz], [geom.voxel_um, geom.voxel_um, geom.thickness_um], labels)?;
    vol.transforms = sections.iter().map(|s| s.transform).collect();
    vol.missing = sections.iter().map(|s| s.labels.is_none()).collect();
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(w: usize, h: usize) -> StackGeometry {
        StackGeometry { width: w, height: h, pixel_um: 20.0, thickness_um: 20.0, voxel_um: 20.0 }
    }

    fn stack(w: usize, h: usize, n: usize) -> Vec<Vec<u8>> {
        (0..n).map(|k| (0..w * h).map(|p| ((p * 7 + k * 3) % 3) as u8).collect()).collect()
    }

    #[test]
    fn identity_is_literal_stack() {
        let s = stack(9, 7, 4);
        let secs: Vec<_> = s.iter().map(|l| StackSection { labels: Some(l), transform: RigidTransform2D::IDENTITY }).collect();
        let v = reconstruct_stack(&secs, &geom(9, 7)).unwrap();
        assert_eq!(v.dims, [9, 7, 4]);
        assert_eq!(v.labels, s.concat());
    }

    #[test]
    fn shifted_sections_round_trip() {
        let (w, h) = (12, 10);
        let s = stack(w, h, 3);
        let shifts = [(2i64, -1i64), (0, 3), (-2, 2)];
        // Section image content moved by (dx, dy) pixels; the volume-to-section
        // transform is then the same translation in micrometres.
        let shifted: Vec<Vec<u8>> = s
            .iter()
            .zip(shifts)
            .map(|(img, (dx, dy))| {
                let mut out = vec![0u8; w * h];
                for y in 0..h as i64 {
                    for x in 0..w as i64 {
                        let (sx, sy) = (x - dx, y - dy);
                        if sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 {
                            out[(y as usize) * w + x as usize] = img[sy as usize * w + sx as usize];
                        }
                    }
                }
                out
            })
            .collect();
        let secs: Vec<_> = shifted
            .iter()
            .zip(shifts)
            .map(|(l, (dx, dy))| StackSection {
                labels: Some(l),
                transform: RigidTransform2D::new(0.0, dx as f64 * 20.0, dy as f64 * 20.0),
            })
            .collect();
        let v = reconstruct_stack(&secs, &geom(w, h)).unwrap();
        for (k, img) in s.iter().enumerate() {
            let (dx, dy) = shifts[k];
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    // Only voxels whose source pixel survived the shift can match.
                    if x + dx >= 0 && y + dy >= 0 && x + dx < w as i64 && y + dy < h as i64 {
                        assert_eq!(v.labels[v.index(x as usize, y as usize, k)], img[y as usize * w + x as usize]);
                    }
                }
            }
        }
    }

    #[test]
    fn missing_sections_filled_from_nearest() {
        let s = stack(5, 5, 10);
        let secs: Vec<_> = s
            .iter()
            .enumerate()
            .map(|(k, l)| StackSection { labels: (k != 3).then_some(l.as_slice()), transform: RigidTransform2D::IDENTITY })
            .collect();
        let v = reconstruct_stack(&secs, &geom(5, 5)).unwrap();
        assert!(v.missing[3] && v.missing.iter().filter(|&&m| m).count() == 1);
        assert_eq!(&v.labels[3 * 25..4 * 25], s[2].as_slice());
        let none: Vec<StackSection> = (0..3).map(|_| StackSection { labels: None, transform: RigidTransform2D::IDENTITY }).collect();
        assert!(reconstruct_stack(&none, &geom(5, 5)).is_err());
    }

    #[test]
    fn check_flags_one_sided_gray() {
        // W G B along x, plus an isolated gray voxel surrounded by white.
        let mut labels = vec![1u8; 7 * 3 * 3];
        let mut v = LabelVolume::new([7, 3, 3], [1.0; 3], labels.clone()).unwrap();
        for k in 0..3 {
            for j in 0..3 {
                labels[v.index(2, j, k)] = 2;
                for i in 3..7 {
                    labels[v.index(i, j, k)] = 0;
                }
            }
        }
        v.labels = labels;
        assert!(v.check().is_well_formed());
        let idx = v.index(0, 1, 1);
        v.labels[idx] = 2;
        let c = v.check();
        assert_eq!(c.components, 2);
        assert_eq!(c.issues.len(), 1);
        assert!(c.issues[0].touches_white && !c.issues[0].touches_background);
    }
}
