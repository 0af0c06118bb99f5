use serde::{Deserialize, Serialize};

use super::{LabelVolume, TriangleMesh};
use crate::error::Result;
use crate::graph::CortexGraph;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphBuildReport {
    pub nodes: usize,
    pub edges: usize,
    /// Vertices outside every section slab.
    pub dropped: usize,
    /// Nodes whose section was missing and filled from a neighbour.
    pub on_missing_sections: usize,
}

/// Interprets mesh vertices as graph nodes and mesh edges as graph edges.
///
/// A node is assigned the section whose slab contains its depth coordinate,
/// and `p_u` is its in-plane position mapped by that section's transform.
/// Vertices outside all slabs are dropped together with their edges.
pub fn mesh_to_graph(mesh: &TriangleMesh, vol: &LabelVolume) -> Result<(CortexGraph, GraphBuildReport)> {
    mesh.validate()?;
    let nz = vol.dims[2];
    let sz = vol.spacing[2];
    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut positions = Vec::new();
    let mut sections = Vec::new();
    let mut coords = Vec::new();
    let mut report = GraphBuildReport::default();
    for (v, p) in mesh.vertices.iter().enumerate() {
        let k = (p.z / sz).floor();
        if !(k >= 0.0 && (k as usize) < nz) {
            report.dropped += 1;
            continue;
        }
        let k = k as usize;
        remap[v] = positions.len() as u32;
        positions.push(p.to_array());
        sections.push(k as u32);
        coords.push(vol.transforms[k].apply([p.x, p.y]));
        if vol.missing[k] {
            report.on_missing_sections += 1;
        }
    }
    let edges: Vec<(u32, u32)> = mesh
        .edges()
        .into_iter()
        .map(|(a, b)| (remap[a as usize], remap[b as usize]))
        .filter(|&(a, b)| a != u32::MAX && b != u32::MAX)
        .collect();
    let mut g = CortexGraph::new(positions, &edges)?;
    g.sections = sections;
    g.coords = coords;
    report.nodes = g.len();
    report.edges = g.edge_count();
    if report.dropped > 0 {
        log::warn!("{} mesh vertices lie outside all sections and were dropped", report.dropped);
    }
    Ok((g, report))
}
