//! Midsurface extraction: section segmentation, rigid stack reconstruction,
//! Laplace field in the cortical mantle, 0.5 isosurface, component filtering,
//! isotropic remeshing and graph interpretation.

mod components;
pub mod io;
mod laplace;
mod marching;
mod remesh;
mod segment;
mod to_graph;
mod transform;
mod volume;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{tri_area, tri_normal, Vec3};

pub use components::{component_labels, filter_components, split_by_plane, CuttingPlane};
pub use laplace::{solve_laplace, LaplaceOptions, LaplaceReport, ScalarField};
pub use marching::marching_cubes;
pub use remesh::{remesh_isotropic, RemeshOptions};
pub use segment::{morphological_chan_vese, segment_section, SegmentOptions};
pub use to_graph::{mesh_to_graph, GraphBuildReport};
pub use transform::RigidTransform2D;
pub use volume::{reconstruct_stack, LabelVolume, StackGeometry, StackSection, Tissue, VolumeCheck};

/// Indexed triangle mesh. Positions are in micrometres in the volume frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let m = Self { vertices, triangles };
        m.validate()?;
        Ok(m)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::Input(format!("triangle {i} references a vertex beyond {n}")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Input(format!("triangle {i} repeats a vertex: {t:?}")));
            }
        }
        Ok(())
    }

    /// Undirected edges `(min, max)` with their incident triangle counts.
    pub fn edge_counts(&self) -> BTreeMap<(u32, u32), u32> {
        let mut m = BTreeMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    /// Sorted unique undirected edges.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        self.edge_counts().into_keys().collect()
    }

    /// Edges shared by more than two triangles.
    pub fn non_manifold_edges(&self) -> Vec<(u32, u32)> {
        self.edge_counts().into_iter().filter(|&(_, c)| c > 2).map(|(e, _)| e).collect()
    }

    pub fn ensure_edge_manifold(&self) -> Result<()> {
        let bad = self.non_manifold_edges();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::NonManifold(bad))
        }
    }

    /// Every edge shared by exactly two triangles, with consistent orientation.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// `V - E + F` counting only referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        self.triangles.iter().flatten().for_each(|&v| used[v as usize] = true);
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.tri_area(t)).sum()
    }

    pub fn tri_area(&self, t: &[u32; 3]) -> f64 {
        tri_area(self.vertices[t[0] as usize], self.vertices[t[1] as usize], self.vertices[t[2] as usize])
    }

    pub fn tri_normal(&self, t: &[u32; 3]) -> Vec3 {
        tri_normal(self.vertices[t[0] as usize], self.vertices[t[1] as usize], self.vertices[t[2] as usize])
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edges().iter().map(|&(a, b)| self.vertices[a as usize].dist(self.vertices[b as usize])).collect()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let l = self.edge_lengths();
        l.iter().sum::<f64>() / l.len().max(1) as f64
    }

    /// Mean number of distinct neighbours over referenced vertices.
    pub fn mean_degree(&self) -> f64 {
        let mut deg = vec![0usize; self.vertices.len()];
        for (a, b) in self.edges() {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        let used: Vec<_> = deg.into_iter().filter(|&d| d > 0).collect();
        used.iter().sum::<usize>() as f64 / used.len().max(1) as f64
    }

    /// Icosahedron subdivided `levels` times, vertices on a sphere of radius
    /// `r` around `center`, outward oriented.
    pub fn icosphere(center: Vec3, r: f64, levels: usize) -> TriangleMesh {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            (-1.0, p, 0.0), (1.0, p, 0.0), (-1.0, -p, 0.0), (1.0, -p, 0.0),
            (0.0, -1.0, p), (0.0, 1.0, p), (0.0, -1.0, -p), (0.0, 1.0, -p),
            (p, 0.0, -1.0), (p, 0.0, 1.0), (-p, 0.0, -1.0), (-p, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
        .collect();
        let mut triangles: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..levels {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(triangles.len() * 4);
            let mut m = |a: u32, b: u32, vs: &mut Vec<Vec3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    vs.push(((vs[a as usize] + vs[b as usize]) * 0.5).normalized());
                    (vs.len() - 1) as u32
                })
            };
            for t in &triangles {
                let (ab, bc, ca) = (m(t[0], t[1], &mut vertices), m(t[1], t[2], &mut vertices), m(t[2], t[0], &mut vertices));
                next.extend([[t[0], ab, ca], [t[1], bc, ab], [t[2], ca, bc], [ab, bc, ca]]);
            }
            triangles = next;
        }
        TriangleMesh { vertices: vertices.into_iter().map(|v| center + v * r).collect(), triangles }
    }

    /// Drops unreferenced vertices, keeping the order of the rest.
    pub fn compact(&self) -> TriangleMesh {
        let mut map = vec![u32::MAX; self.vertices.len()];
        self.triangles.iter().flatten().for_each(|&v| map[v as usize] = 0);
        let mut vertices = Vec::new();
        for (v, m) in map.iter_mut().enumerate() {
            if *m == 0 {
                *m = vertices.len() as u32;
                vertices.push(self.vertices[v]);
            }
        }
        let triangles = self.triangles.iter().map(|t| t.map(|v| map[v as usize])).collect();
        TriangleMesh { vertices, triangles }
    }
}
