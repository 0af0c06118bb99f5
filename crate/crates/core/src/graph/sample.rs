use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CortexGraph, Split};
use crate::error::{Error, Result};

/// Node-induced subgraph around a centre. `nodes` is ordered by hop distance
/// (then node id), so `nodes[0]` is the centre and every prefix with hop at
/// most `h` is contiguous. `edges` holds local index pairs `(a, b)`, `a < b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Subgraph {
    pub center: u32,
    /// Requested hop radius (the actual depth may be smaller on small
    /// components).
    pub radius: u32,
    pub nodes: Vec<u32>,
    pub hops: Vec<u32>,
    pub edges: Vec<(u32, u32)>,
}

impl Subgraph {
    fn build(g: &CortexGraph, center: u32, radius: u32, mut found: Vec<(u32, u32)>) -> Self {
        // (hop, node)
        found.sort_unstable();
        let local: HashMap<u32, u32> = found.iter().enumerate().map(|(i, &(_, v))| (v, i as u32)).collect();
        let mut edges = Vec::new();
        for (i, &(_, v)) in found.iter().enumerate() {
            for w in g.neighbors(v as usize) {
                if let Some(&j) = local.get(w) {
                    if (i as u32) < j {
                        edges.push((i as u32, j));
                    }
                }
            }
        }
        edges.sort_unstable();
        Self { center, radius, nodes: found.iter().map(|x| x.1).collect(), hops: found.iter().map(|x| x.0).collect(), edges }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> u32 {
        self.hops.last().copied().unwrap_or(0)
    }

    /// Number of leading nodes with hop distance at most `h`.
    pub fn prefix_len(&self, h: u32) -> usize {
        self.hops.partition_point(|&x| x <= h)
    }
}

/// Exact closed `k`-hop neighbourhood of `u` with induced edges.
pub fn khop_subgraph(g: &CortexGraph, u: usize, k: u32) -> Subgraph {
    let mut hop: HashMap<u32, u32> = HashMap::from([(u as u32, 0)]);
    let mut frontier = vec![u as u32];
    for h in 1..=k {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in g.neighbors(v as usize) {
                if let std::collections::hash_map::Entry::Vacant(e) = hop.entry(w) {
                    e.insert(h);
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Subgraph::build(g, u as u32, k, hop.into_iter().map(|(v, h)| (h, v)).collect())
}

/// Layered fixed-fanout sampling: at each hop every frontier node draws up to
/// `fanout` distinct neighbours uniformly; newly reached nodes form the next
/// frontier. Edges are those of the graph induced on the sampled nodes.
pub fn sample_fixed_neighbors<R: Rng + ?Sized>(g: &CortexGraph, u: usize, k: u32, fanout: usize, rng: &mut R) -> Subgraph {
    assert!(fanout >= 1, "fanout must be positive");
    let mut hop: HashMap<u32, u32> = HashMap::from([(u as u32, 0)]);
    let mut frontier = vec![u as u32];
    for h in 1..=k {
        let mut next = Vec::new();
        for &v in &frontier {
            let nb = g.neighbors(v as usize);
            let picks: Vec<u32> = if nb.len() <= fanout {
                nb.to_vec()
            } else {
                let mut idx = index::sample(rng, nb.len(), fanout).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| nb[i]).collect()
            };
            for w in picks {
                if let std::collections::hash_map::Entry::Vacant(e) = hop.entry(w) {
                    e.insert(h);
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Subgraph::build(g, u as u32, k, hop.into_iter().map(|(v, h)| (h, v)).collect())
}

/// Infinite stream of labelled nodes from one split, each drawn with
/// probability proportional to the inverse frequency of its class: a class is
/// chosen uniformly, then a node uniformly within it. Nodes without features
/// (when the graph carries a feature block) are excluded.
#[derive(Clone, Debug)]
pub struct BalancedStream {
    by_class: Vec<Vec<usize>>,
    excluded: usize,
    rng: ChaCha8Rng,
}

impl BalancedStream {
    pub fn new(g: &CortexGraph, split: Split, seed: u64) -> Result<Self> {
        let mut by_class = vec![Vec::new(); g.num_classes];
        let mut excluded = 0;
        for u in g.nodes_in(split) {
            let Some(y) = g.labels[u] else { continue };
            if g.features.is_some() && !g.has_features(u) {
                excluded += 1;
                continue;
            }
            by_class[y as usize].push(u);
        }
        if by_class.is_empty() {
            return Err(Error::Input("graph has no classes".into()));
        }
        let absent: Vec<usize> = (0..by_class.len()).filter(|&c| by_class[c].is_empty()).collect();
        if !absent.is_empty() {
            return Err(Error::Input(format!("classes {absent:?} have no usable nodes in the {} split", split.name())));
        }
        if excluded > 0 {
            log::warn!("{excluded} feature-less node(s) excluded from the {} stream", split.name());
        }
        Ok(Self { by_class, excluded, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.by_class.iter().map(Vec::len).collect()
    }

    /// Total number of streamable nodes.
    pub fn population(&self) -> usize {
        self.by_class.iter().map(Vec::len).sum()
    }
}

impl Iterator for BalancedStream {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let c = self.rng.random_range(0..self.by_class.len());
        let nodes = &self.by_class[c];
        Some(nodes[self.rng.random_range(0..nodes.len())])
    }
}
