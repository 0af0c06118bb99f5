use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::geom::{closest_point_on_triangle, tri_normal, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemeshOptions {
    pub target_edge: f64,
    pub iterations: usize,
    /// Fraction of the tangential centroid displacement applied per step.
    pub relax: f64,
}

impl Default for RemeshOptions {
    fn default() -> Self {
        Self { target_edge: 300.0, iterations: 5, relax: 0.5 }
    }
}

const DEAD: u32 = u32::MAX;

struct Work {
    p: Vec<Vec3>,
    t: Vec<[u32; 3]>,
}

/// Incidence snapshot valid for one pass; collapses and flips lock the
/// vertices they touch so the remaining entries stay accurate.
struct Incidence {
    vt: Vec<Vec<u32>>,
    boundary: Vec<bool>,
}

impl Work {
    fn incidence(&self) -> Incidence {
        let mut vt = vec![Vec::new(); self.p.len()];
        for (f, t) in self.t.iter().enumerate() {
            if t[0] != DEAD {
                for &v in t {
                    vt[v as usize].push(f as u32);
                }
            }
        }
        let mut boundary = vec![false; self.p.len()];
        for ((a, b), c) in self.edge_counts() {
            if c == 1 {
                boundary[a as usize] = true;
                boundary[b as usize] = true;
            }
        }
        Incidence { vt, boundary }
    }

    fn edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut m = HashMap::new();
        for t in self.t.iter().filter(|t| t[0] != DEAD) {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    fn sorted_edges(&self) -> Vec<(u32, u32)> {
        let mut e: Vec<_> = self.edge_counts().into_keys().collect();
        e.sort_unstable();
        e
    }

    fn len(&self, a: u32, b: u32) -> f64 {
        self.p[a as usize].dist(self.p[b as usize])
    }

    fn normal(&self, t: &[u32; 3]) -> Vec3 {
        tri_normal(self.p[t[0] as usize], self.p[t[1] as usize], self.p[t[2] as usize])
    }

    fn neighbors(&self, vt: &[Vec<u32>], v: u32) -> Vec<u32> {
        let mut n: Vec<u32> =
            vt[v as usize].iter().flat_map(|&f| self.t[f as usize]).filter(|&w| w != v).collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    fn edge_faces(&self, vt: &[Vec<u32>], a: u32, b: u32) -> Vec<u32> {
        vt[a as usize].iter().copied().filter(|&f| self.t[f as usize].contains(&b)).collect()
    }

    /// Splits every edge longer than `hi` at its midpoint, subdividing each
    /// triangle by the number of its split edges. Returns the split count.
    fn split_pass(&mut self, hi: f64) -> usize {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        for (a, b) in self.sorted_edges() {
            if self.len(a, b) > hi {
                self.p.push((self.p[a as usize] + self.p[b as usize]) * 0.5);
                mid.insert((a, b), (self.p.len() - 1) as u32);
            }
        }
        if mid.is_empty() {
            return 0;
        }
        let m_of = |a: u32, b: u32| mid.get(&(a.min(b), a.max(b))).copied();
        let old = std::mem::take(&mut self.t);
        for t in old.into_iter().filter(|t| t[0] != DEAD) {
            let m = [m_of(t[0], t[1]), m_of(t[1], t[2]), m_of(t[2], t[0])];
            match m.iter().filter(|x| x.is_some()).count() {
                0 => self.t.push(t),
                1 => {
                    let i = m.iter().position(|x| x.is_some()).unwrap();
                    let (a, b, c, mm) = (t[i], t[(i + 1) % 3], t[(i + 2) % 3], m[i].unwrap());
                    self.t.push([a, mm, c]);
                    self.t.push([mm, b, c]);
                }
                2 => {
                    let k = m.iter().position(|x| x.is_none()).unwrap();
                    let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                    let (mb, mc) = (m[(k + 1) % 3].unwrap(), m[(k + 2) % 3].unwrap());
                    // mb on b-c, mc on c-a.
                    self.t.push([mb, c, mc]);
                    if self.len(a, mb) <= self.len(b, mc) {
                        self.t.push([a, b, mb]);
                        self.t.push([a, mb, mc]);
                    } else {
                        self.t.push([a, b, mc]);
                        self.t.push([b, mb, mc]);
                    }
                }
                _ => {
                    let (m0, m1, m2) = (m[0].unwrap(), m[1].unwrap(), m[2].unwrap());
                    self.t.push([t[0], m0, m2]);
                    self.t.push([m0, t[1], m1]);
                    self.t.push([m2, m1, t[2]]);
                    self.t.push([m0, m1, m2]);
                }
            }
        }
        mid.len()
    }

    /// Collapses edges shorter than `lo` where the link condition holds, no
    /// edge longer than `hi` appears and no triangle normal turns over.
    fn collapse_pass(&mut self, lo: f64, hi: f64) -> usize {
        let inc = self.incidence();
        let mut vt = inc.vt.clone();
        let mut short: Vec<(f64, u32, u32)> = self
            .sorted_edges()
            .into_iter()
            .map(|(a, b)| (self.len(a, b), a, b))
            .filter(|&(l, _, _)| l < lo)
            .collect();
        short.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        let mut locked = vec![false; self.p.len()];
        let mut count = 0;
        for (_, a, b) in short {
            if locked[a as usize] || locked[b as usize] {
                continue;
            }
            let faces = self.edge_faces(&vt, a, b);
            let (ba, bb) = (inc.boundary[a as usize], inc.boundary[b as usize]);
            // (kept, removed, new position)
            let (keep, drop, pos) = match (ba, bb) {
                (false, false) => (a, b, (self.p[a as usize] + self.p[b as usize]) * 0.5),
                (true, false) => (a, b, self.p[a as usize]),
                (false, true) => (b, a, self.p[b as usize]),
                (true, true) if faces.len() == 1 => (a, b, (self.p[a as usize] + self.p[b as usize]) * 0.5),
                _ => continue,
            };
            let na = self.neighbors(&vt, a);
            let nb = self.neighbors(&vt, b);
            let common: Vec<u32> = na.iter().copied().filter(|v| nb.binary_search(v).is_ok()).collect();
            if common.len() != faces.len() {
                continue;
            }
            let thin = |v: u32| !inc.boundary[v as usize] && self.neighbors(&vt, v).len() <= 3;
            if thin(a) || thin(b) || common.iter().any(|&c| thin(c)) {
                continue;
            }
            if na.iter().chain(&nb).any(|&w| w != a && w != b && pos.dist(self.p[w as usize]) > hi) {
                continue;
            }
            let moved = |t: &[u32; 3]| {
                let q = t.map(|v| if v == a || v == b { pos } else { self.p[v as usize] });
                tri_normal(q[0], q[1], q[2])
            };
            let flips = vt[a as usize].iter().chain(&vt[b as usize]).any(|&f| {
                let t = &self.t[f as usize];
                if t.contains(&a) && t.contains(&b) {
                    return false;
                }
                let (n0, n1) = (self.normal(t), moved(t));
                n1.norm() < 0.5 || n0.dot(n1) < 0.2
            });
            if flips {
                continue;
            }
            self.p[keep as usize] = pos;
            let removed: Vec<u32> = std::mem::take(&mut vt[drop as usize]);
            for f in removed {
                let t = &mut self.t[f as usize];
                if t.contains(&keep) {
                    *t = [DEAD; 3];
                    for &v in [a, b].iter().chain(&common) {
                        vt[v as usize].retain(|&g| g != f);
                    }
                } else {
                    for v in t.iter_mut() {
                        if *v == drop {
                            *v = keep;
                        }
                    }
                    vt[keep as usize].push(f);
                }
            }
            for &v in na.iter().chain(&nb).chain(&[a, b]) {
                locked[v as usize] = true;
            }
            count += 1;
        }
        count
    }

    /// Flips interior edges whenever that lowers the total valence deviation
    /// (target 6 inside, 4 on the boundary) without folding the surface.
    fn flip_pass(&mut self) -> usize {
        let inc = self.incidence();
        let mut valence: Vec<i64> = (0..self.p.len() as u32).map(|v| self.neighbors(&inc.vt, v).len() as i64).collect();
        let target = |v: u32| if inc.boundary[v as usize] { 4 } else { 6 };
        let mut vt = inc.vt.clone();
        let mut locked = vec![false; self.p.len()];
        let mut count = 0;
        for (a, b) in self.sorted_edges() {
            if locked[a as usize] || locked[b as usize] {
                continue;
            }
            let faces: Vec<u32> = vt[a as usize].iter().copied().filter(|&f| self.t[f as usize].contains(&b)).collect();
            if faces.len() != 2 {
                continue;
            }
            let (mut f1, mut f2) = (faces[0] as usize, faces[1] as usize);
            // f1 traverses a -> b.
            let dir = |t: &[u32; 3], x: u32, y: u32| (0..3).any(|k| t[k] == x && t[(k + 1) % 3] == y);
            if !dir(&self.t[f1], a, b) {
                std::mem::swap(&mut f1, &mut f2);
            }
            if !dir(&self.t[f1], a, b) || !dir(&self.t[f2], b, a) {
                continue;
            }
            let c = *self.t[f1].iter().find(|&&v| v != a && v != b).unwrap();
            let d = *self.t[f2].iter().find(|&&v| v != a && v != b).unwrap();
            if locked[c as usize] || locked[d as usize] || c == d {
                continue;
            }
            if vt[c as usize].iter().any(|&f| self.t[f as usize].contains(&d)) {
                continue;
            }
            let dev = |v: u32, delta: i64| (valence[v as usize] + delta - target(v)).abs();
            let before = dev(a, 0) + dev(b, 0) + dev(c, 0) + dev(d, 0);
            let after = dev(a, -1) + dev(b, -1) + dev(c, 1) + dev(d, 1);
            if after >= before || valence[a as usize] <= 3 || valence[b as usize] <= 3 {
                continue;
            }
            let (t1, t2) = ([a, d, c], [d, b, c]);
            let (n1, n2) = (self.normal(&t1), self.normal(&t2));
            let n0 = self.normal(&self.t[f1]) + self.normal(&self.t[f2]);
            if n1.norm() < 0.5 || n2.norm() < 0.5 || n1.dot(n2) < 0.2 || n1.dot(n0) <= 0.0 || n2.dot(n0) <= 0.0 {
                continue;
            }
            self.t[f1] = t1;
            self.t[f2] = t2;
            vt[b as usize].retain(|&f| f as usize != f1);
            vt[a as usize].retain(|&f| f as usize != f2);
            vt[d as usize].push(f1 as u32);
            vt[c as usize].push(f2 as u32);
            valence[a as usize] -= 1;
            valence[b as usize] -= 1;
            valence[c as usize] += 1;
            valence[d as usize] += 1;
            for v in [a, b, c, d] {
                locked[v as usize] = true;
            }
            count += 1;
        }
        count
    }

    /// Moves interior vertices toward their neighbour centroid within the
    /// tangent plane, then projects everything back onto the input surface.
    fn relax(&mut self, weight: f64, reference: &Projector) {
        let inc = self.incidence();
        let mut vn = vec![Vec3::default(); self.p.len()];
        for t in self.t.iter().filter(|t| t[0] != DEAD) {
            let n = (self.p[t[1] as usize] - self.p[t[0] as usize]).cross(self.p[t[2] as usize] - self.p[t[0] as usize]);
            for &v in t {
                vn[v as usize] += n;
            }
        }
        let next: Vec<Vec3> = (0..self.p.len())
            .map(|v| {
                let p = self.p[v];
                if inc.boundary[v] || inc.vt[v].is_empty() {
                    return p;
                }
                let nb = self.neighbors(&inc.vt, v as u32);
                let c = nb.iter().fold(Vec3::default(), |s, &w| s + self.p[w as usize]) / nb.len() as f64;
                let n = vn[v].normalized();
                let d = c - p;
                p + (d - n * d.dot(n)) * weight
            })
            .collect();
        self.p = next
            .into_iter()
            .enumerate()
            .map(|(v, q)| if inc.vt[v].is_empty() || inc.boundary[v] { q } else { reference.project(q) })
            .collect();
    }
}

/// Closest-point queries against a fixed triangle mesh via a uniform grid.
pub(crate) struct Projector<'m> {
    mesh: &'m TriangleMesh,
    cell: f64,
    grid: HashMap<[i64; 3], Vec<u32>>,
}

impl<'m> Projector<'m> {
    pub(crate) fn new(mesh: &'m TriangleMesh, cell: f64) -> Self {
        let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (f, t) in mesh.triangles.iter().enumerate() {
            let ps = t.map(|v| mesh.vertices[v as usize].to_array());
            let mut lo = [0i64; 3];
            let mut hi = [0i64; 3];
            for ax in 0..3 {
                lo[ax] = (ps.iter().map(|p| p[ax]).fold(f64::INFINITY, f64::min) / cell).floor() as i64;
                hi[ax] = (ps.iter().map(|p| p[ax]).fold(f64::NEG_INFINITY, f64::max) / cell).floor() as i64;
            }
            for x in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for z in lo[2]..=hi[2] {
                        grid.entry([x, y, z]).or_default().push(f as u32);
                    }
                }
            }
        }
        Self { mesh, cell, grid }
    }

    pub(crate) fn project(&self, p: Vec3) -> Vec3 {
        if self.grid.is_empty() {
            return p;
        }
        let c = [(p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64, (p.z / self.cell).floor() as i64];
        let mut best = (f64::INFINITY, p);
        for r in 0i64.. {
            for x in -r..=r {
                for y in -r..=r {
                    for z in -r..=r {
                        if x.abs().max(y.abs()).max(z.abs()) != r {
                            continue;
                        }
                        if let Some(fs) = self.grid.get(&[c[0] + x, c[1] + y, c[2] + z]) {
                            for &f in fs {
                                let t = self.mesh.triangles[f as usize].map(|v| self.mesh.vertices[v as usize]);
                                let q = closest_point_on_triangle(p, t[0], t[1], t[2]);
                                let d = q.dist(p);
                                if d < best.0 {
                                    best = (d, q);
                                }
                            }
                        }
                    }
                }
            }
            if best.0 <= r as f64 * self.cell || r > 4096 {
                break;
            }
        }
        best.1
    }
}

/// Incremental isotropic remeshing toward `target_edge`: each iteration splits
/// edges above 4/3 of the target, collapses edges below 4/5, flips toward
/// regular valence and relaxes tangentially with back-projection onto the
/// input. Boundary vertices stay fixed during relaxation.
pub fn remesh_isotropic(mesh: &TriangleMesh, opts: &RemeshOptions) -> Result<TriangleMesh> {
    if !(opts.target_edge > 0.0) || !(opts.relax >= 0.0 && opts.relax <= 1.0) {
        return Err(Error::Config(format!("invalid remesh options {opts:?}")));
    }
    mesh.validate()?;
    mesh.ensure_edge_manifold()?;
    if mesh.is_empty() {
        return Ok(TriangleMesh::default());
    }
    let (lo, hi) = (0.8 * opts.target_edge, 4.0 / 3.0 * opts.target_edge);
    let cell = mesh.mean_edge_length().max(opts.target_edge * 0.5);
    let projector = Projector::new(mesh, cell);
    let mut w = Work { p: mesh.vertices.clone(), t: mesh.triangles.clone() };
    for _ in 0..opts.iterations {
        for _ in 0..16 {
            if w.split_pass(hi) == 0 {
                break;
            }
        }
        for _ in 0..64 {
            if w.collapse_pass(lo, hi) == 0 {
                break;
            }
        }
        w.t.retain(|t| t[0] != DEAD);
        for _ in 0..8 {
            if w.flip_pass() == 0 {
                break;
            }
        }
        w.relax(opts.relax, &projector);
    }
    w.t.retain(|t| t[0] != DEAD);
    let out = TriangleMesh { vertices: w.p, triangles: w.t }.compact();
    out.ensure_edge_manifold()?;
    Ok(out)
}
