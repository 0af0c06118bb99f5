use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::geom::Vec3;

/// Component id per vertex (connectivity through shared triangles), numbered
/// in order of first appearance. Unreferenced vertices get their own ids.
pub fn component_labels(mesh: &TriangleMesh) -> Vec<usize> {
    let n = mesh.vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for t in &mesh.triangles {
        for k in 1..3 {
            let (a, b) = (find(&mut parent, t[0] as usize), find(&mut parent, t[k] as usize));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut id = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|v| {
            let r = find(&mut parent, v);
            if id[r] == usize::MAX {
                id[r] = next;
                next += 1;
            }
            id[r]
        })
        .collect()
}

/// Removes connected components with fewer than `min_vertices` referenced
/// vertices and drops unreferenced vertices.
pub fn filter_components(mesh: &TriangleMesh, min_vertices: usize) -> TriangleMesh {
    if min_vertices == 0 {
        return mesh.clone();
    }
    let labels = component_labels(mesh);
    let mut used = vec![false; mesh.vertices.len()];
    mesh.triangles.iter().flatten().for_each(|&v| used[v as usize] = true);
    let mut sizes = vec![0usize; labels.iter().max().map_or(0, |m| m + 1)];
    for (v, &c) in labels.iter().enumerate() {
        if used[v] {
            sizes[c] += 1;
        }
    }
    let triangles: Vec<[u32; 3]> =
        mesh.triangles.iter().filter(|t| sizes[labels[t[0] as usize]] >= min_vertices).copied().collect();
    if triangles.is_empty() && !mesh.triangles.is_empty() {
        log::warn!("component filter (min {min_vertices} vertices) removed the whole mesh");
    }
    TriangleMesh { vertices: mesh.vertices.clone(), triangles }.compact()
}

/// Splits a mesh along a plane, e.g. between hemispheres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuttingPlane {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

/// Assigns each triangle to the side of `plane` holding its centroid; returns
/// the (positive, negative) halves, each compacted.
pub fn split_by_plane(mesh: &TriangleMesh, plane: &CuttingPlane) -> (TriangleMesh, TriangleMesh) {
    let (p0, n) = (Vec3::from_array(plane.point), Vec3::from_array(plane.normal));
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for t in &mesh.triangles {
        let c = (mesh.vertices[t[0] as usize] + mesh.vertices[t[1] as usize] + mesh.vertices[t[2] as usize]) / 3.0;
        if (c - p0).dot(n) >= 0.0 {
            pos.push(*t);
        } else {
            neg.push(*t);
        }
    }
    let half = |triangles| TriangleMesh { vertices: mesh.vertices.clone(), triangles }.compact();
    (half(pos), half(neg))
}
