use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::graph::Subgraph;

/// Directed edges used by one layer: messages flow `src -> dst`, with `dst`
/// a target row and `src` an input row.
#[derive(Clone, Debug)]
pub struct LayerEdges {
    pub targets: usize,
    pub inputs: usize,
    pub dst: Rc<Vec<usize>>,
    pub src: Rc<Vec<usize>>,
    /// `1 / deg(t)` per target, 0 for targets without incoming edges.
    pub inv_degree: Rc<Vec<f64>>,
}

/// Disjoint union of subgraphs with rows ordered by hop distance, so that the
/// rows with hop at most `h` form the prefix `0..prefix[h]`. Rows
/// `0..centers` are the subgraph centres in input order.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    /// Graph node id of every row.
    pub nodes: Vec<u32>,
    pub centers: usize,
    pub radius: u32,
    /// `prefix[h]` = number of rows with hop <= h, for `h` in `0..=radius`.
    pub prefix: Vec<usize>,
    /// Directed edges sorted by `(dst, src)`, both directions present.
    dst: Vec<usize>,
    src: Vec<usize>,
    /// Nodes dropped by the `keep` predicate.
    pub pruned: usize,
}

impl GraphBatch {
    /// Combines subgraphs, dropping non-centre nodes for which `keep` is false.
    /// All subgraphs must share one radius.
    pub fn new(subs: &[Subgraph], keep: impl Fn(u32) -> bool) -> Result<Self> {
        let Some(first) = subs.first() else {
            return Err(Error::Input("empty batch".into()));
        };
        let radius = first.radius;
        if let Some(s) = subs.iter().find(|s| s.radius != radius) {
            return Err(Error::Input(format!("subgraph radii differ ({} vs {radius})", s.radius)));
        }
        // (hop, subgraph, local)
        let mut keys = Vec::new();
        let mut pruned = 0;
        for (i, s) in subs.iter().enumerate() {
            for (j, (&v, &h)) in s.nodes.iter().zip(&s.hops).enumerate() {
                if j > 0 && !keep(v) {
                    pruned += 1;
                    continue;
                }
                keys.push((h, i as u32, j as u32));
            }
        }
        keys.sort_unstable();
        let row: HashMap<(u32, u32), usize> = keys.iter().enumerate().map(|(r, &(_, i, j))| ((i, j), r)).collect();
        let nodes: Vec<u32> = keys.iter().map(|&(_, i, j)| subs[i as usize].nodes[j as usize]).collect();
        let prefix = (0..=radius).map(|h| keys.partition_point(|k| k.0 <= h)).collect();
        let mut pairs = Vec::new();
        for (i, s) in subs.iter().enumerate() {
            for &(a, b) in &s.edges {
                if let (Some(&ra), Some(&rb)) = (row.get(&(i as u32, a)), row.get(&(i as u32, b))) {
                    pairs.push((ra, rb));
                    pairs.push((rb, ra));
                }
            }
        }
        pairs.sort_unstable();
        let (dst, src) = pairs.into_iter().unzip();
        Ok(Self { nodes, centers: subs.len(), radius, prefix, dst, src, pruned })
    }

    pub fn rows(&self) -> usize {
        self.nodes.len()
    }

    /// Rows needed as input to a model with `layers` message-passing layers.
    pub fn input_rows(&self, layers: usize) -> Result<usize> {
        if (self.radius as usize) < layers {
            return Err(Error::Input(format!("subgraphs of radius {} are too shallow for {layers} layers", self.radius)));
        }
        Ok(self.prefix[layers])
    }

    /// Edges for layer `l` (1-based) of a `layers`-deep model: targets are rows
    /// with hop <= layers - l, inputs rows with hop <= layers - l + 1.
    /// `self_loops` adds one `t -> t` edge per target.
    pub fn layer_edges(&self, l: usize, layers: usize, self_loops: bool) -> Result<LayerEdges> {
        self.input_rows(layers)?;
        let (targets, inputs) = (self.prefix[layers - l], self.prefix[layers - l + 1]);
        let m = self.dst.partition_point(|&d| d < targets);
        let mut dst = Vec::with_capacity(m + targets);
        let mut src = Vec::with_capacity(m + targets);
        let mut deg = vec![0usize; targets];
        let mut k = 0;
        for t in 0..targets {
            let mut own = self_loops;
            while k < m && self.dst[k] == t {
                let s = self.src[k];
                if s < inputs {
                    if own && s > t {
                        dst.push(t);
                        src.push(t);
                        own = false;
                    }
                    dst.push(t);
                    src.push(s);
                    deg[t] += 1;
                }
                k += 1;
            }
            if own {
                dst.push(t);
                src.push(t);
            }
        }
        let inv_degree = deg.iter().map(|&d| if d == 0 { 0.0 } else { 1.0 / d as f64 }).collect();
        Ok(LayerEdges { targets, inputs, dst: Rc::new(dst), src: Rc::new(src), inv_degree: Rc::new(inv_degree) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{khop_subgraph, CortexGraph};

    fn path(n: usize) -> CortexGraph {
        let edges: Vec<(u32, u32)> = (1..n as u32).map(|v| (v - 1, v)).collect();
        CortexGraph::new(vec![[0.0; 3]; n], &edges).unwrap()
    }

    #[test]
    fn rows_are_hop_ordered_across_subgraphs() {
        let g = path(6);
        let subs = [khop_subgraph(&g, 0, 2), khop_subgraph(&g, 3, 2)];
        let b = GraphBatch::new(&subs, |_| true).unwrap();
        assert_eq!(b.prefix, [2, 5, 8]);
        assert_eq!(&b.nodes[..2], &[0, 3]);
        let mut hop1 = b.nodes[2..5].to_vec();
        hop1.sort();
        assert_eq!(hop1, [1, 2, 4]);
        // Layer 2 of 2: targets are the centres.
        let e = b.layer_edges(2, 2, false).unwrap();
        assert_eq!((e.targets, e.inputs), (2, 5));
        assert_eq!(e.dst.len(), 3);
        let e = b.layer_edges(2, 2, true).unwrap();
        assert_eq!(e.dst.len(), 5);
        assert!(e.dst.windows(2).all(|w| w[0] <= w[1]));
        assert!(b.input_rows(3).is_err());
    }

    #[test]
    fn pruning_drops_nodes_and_their_edges() {
        let g = path(4);
        let subs = [khop_subgraph(&g, 1, 1)];
        let b = GraphBatch::new(&subs, |v| v != 2).unwrap();
        assert_eq!(b.nodes, [1, 0]);
        assert_eq!(b.pruned, 1);
        let e = b.layer_edges(1, 1, false).unwrap();
        assert_eq!((e.dst.as_slice(), e.src.as_slice()), (&[0usize][..], &[1usize][..]));
        assert_eq!(e.inv_degree.as_slice(), &[1.0]);
    }
}
