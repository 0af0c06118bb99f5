//! Attributed cortex graph, node splits, neighbourhood samplers and the
//! class-balanced training stream.

mod io;
mod sample;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_graph, read_split_map, write_graph, write_split_map};
pub use sample::{khop_subgraph, sample_fixed_neighbors, BalancedStream, Subgraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Split {
    Train = 0,
    Test = 1,
    Unseen = 2,
    Unlabeled = 3,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Test, Split::Unseen, Split::Unlabeled];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unseen => "unseen",
            Split::Unlabeled => "unlabeled",
        }
    }
}

/// Row-per-node f32 matrix; rows of absent nodes are zero and must not be read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMatrix {
    pub dim: usize,
    pub data: Vec<f32>,
    pub present: Vec<bool>,
}

impl NodeMatrix {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self { dim, data: vec![0.0; nodes * dim], present: vec![false; nodes] }
    }

    pub fn row(&self, u: usize) -> &[f32] {
        &self.data[u * self.dim..(u + 1) * self.dim]
    }

    pub fn set_row(&mut self, u: usize, v: &[f32]) {
        assert_eq!(v.len(), self.dim, "row width");
        self.data[u * self.dim..(u + 1) * self.dim].copy_from_slice(v);
        self.present[u] = true;
    }

    pub fn rows(&self) -> usize {
        self.present.len()
    }

    pub fn missing(&self) -> usize {
        self.present.iter().filter(|&&p| !p).count()
    }
}

/// Graph over midsurface vertices with per-node attributes; adjacency is
/// symmetric, sorted, and free of self-loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CortexGraph {
    /// 3D position in micrometres, volume frame.
    pub positions: Vec<[f64; 3]>,
    pub sections: Vec<u32>,
    /// In-section coordinate `p_u`, micrometres in the section image frame.
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<Option<u32>>,
    pub splits: Vec<Split>,
    /// Node lies within one patch radius of an area border.
    pub border: Vec<bool>,
    pub num_classes: usize,
    /// Patch embeddings `h_u`.
    pub features: Option<NodeMatrix>,
    /// Probabilistic-map prior `h_u^P`.
    pub prior_pm: Option<NodeMatrix>,
    /// Canonical-coordinate prior `h_u^C`.
    pub prior_co: Option<NodeMatrix>,
    offsets: Vec<u32>,
    adjacency: Vec<u32>,
}

impl CortexGraph {
    /// Builds a graph with positions only; other attributes default to
    /// section 0, origin coordinates, unlabeled, unlabeled split.
    pub fn new(positions: Vec<[f64; 3]>, edges: &[(u32, u32)]) -> Result<Self> {
        let n = positions.len();
        let mut g = Self {
            sections: vec![0; n],
            coords: vec![[0.0; 2]; n],
            labels: vec![None; n],
            splits: vec![Split::Unlabeled; n],
            border: vec![false; n],
            num_classes: 0,
            features: None,
            prior_pm: None,
            prior_co: None,
            positions,
            offsets: Vec::new(),
            adjacency: Vec::new(),
        };
        g.set_edges(edges)?;
        Ok(g)
    }

    pub fn set_edges(&mut self, edges: &[(u32, u32)]) -> Result<()> {
        let n = self.positions.len();
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::Input(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::Input(format!("self-loop at node {a}")));
            }
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        self.offsets = Vec::with_capacity(n + 1);
        self.adjacency.clear();
        self.offsets.push(0);
        for mut l in adj {
            l.sort_unstable();
            l.dedup();
            self.adjacency.extend(l);
            self.offsets.push(self.adjacency.len() as u32);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.adjacency[self.offsets[u] as usize..self.offsets[u + 1] as usize]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors(u).len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        (0..self.len())
            .flat_map(|u| self.neighbors(u).iter().filter(move |&&v| v as usize > u).map(move |&v| (u as u32, v)))
            .collect()
    }

    pub fn mean_degree(&self) -> f64 {
        self.adjacency.len() as f64 / self.len().max(1) as f64
    }

    pub fn has_features(&self, u: usize) -> bool {
        self.features.as_ref().is_some_and(|f| f.present[u])
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&u| self.splits[u] == split).collect()
    }

    pub fn section_ids(&self) -> Vec<u32> {
        let mut s = self.sections.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            ("sections", self.sections.len()),
            ("coords", self.coords.len()),
            ("labels", self.labels.len()),
            ("splits", self.splits.len()),
            ("border", self.border.len()),
        ];
        for (name, l) in lens {
            if l != n {
                return Err(Error::Input(format!("{name} has {l} entries for {n} nodes")));
            }
        }
        for (name, m) in [("features", &self.features), ("prior_pm", &self.prior_pm), ("prior_co", &self.prior_co)] {
            if let Some(m) = m {
                if m.present.len() != n || m.data.len() != n * m.dim {
                    return Err(Error::Input(format!("{name} block does not match {n} nodes")));
                }
            }
        }
        if let Some((u, l)) = self.labels.iter().enumerate().find_map(|(u, l)| l.filter(|&l| l as usize >= self.num_classes).map(|l| (u, l))) {
            return Err(Error::Input(format!("node {u} has label {l} outside {} classes", self.num_classes)));
        }
        for u in 0..n {
            for &v in self.neighbors(u) {
                if v as usize == u || self.neighbors(v as usize).binary_search(&(u as u32)).is_err() {
                    return Err(Error::Input(format!("adjacency not symmetric at ({u}, {v})")));
                }
            }
        }
        Ok(())
    }

    /// Tags every node with the split of its section.
    pub fn split_nodes(&mut self, assignment: &BTreeMap<u32, Split>) -> Result<()> {
        let mut tags = Vec::with_capacity(self.len());
        for (u, s) in self.sections.iter().enumerate() {
            match assignment.get(s) {
                Some(&t) => tags.push(t),
                None => return Err(Error::Input(format!("section {s} (node {u}) has no split assignment"))),
            }
        }
        self.splits = tags;
        Ok(())
    }

    /// Node counts per split.
    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut m = BTreeMap::new();
        for &s in &self.splits {
            *m.entry(s).or_insert(0) += 1;
        }
        m
    }
}
