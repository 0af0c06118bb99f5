//! Oracles and fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cytomap::graph::CortexGraph;

/// Random undirected graph on `n` nodes: a random spanning path of a few
/// long-range chords plus local edges, so that hop structure is nontrivial.
pub fn random_graph(n: usize, extra: usize, seed: u64) -> CortexGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for v in 1..n as u32 {
        if rng.random_bool(0.9) {
            edges.push((rng.random_range(v.saturating_sub(4)..v), v));
        }
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n as u32);
        let b = rng.random_range(0..n as u32);
        if a != b {
            edges.push((a, b));
        }
    }
    CortexGraph::new(vec![[0.0; 3]; n], &edges).unwrap()
}

/// Hop distances of every node within `k` hops of `u`, by plain BFS over an
/// edge-list adjacency.
pub fn bfs_oracle(g: &CortexGraph, u: usize, k: u32) -> BTreeMap<u32, u32> {
    let mut adj: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for (a, b) in g.edges() {
        adj.entry(a).or_default().insert(b);
        adj.entry(b).or_default().insert(a);
    }
    let mut dist = BTreeMap::from([(u as u32, 0u32)]);
    let mut q = VecDeque::from([u as u32]);
    while let Some(v) = q.pop_front() {
        let d = dist[&v];
        if d == k {
            continue;
        }
        for &w in adj.get(&v).into_iter().flatten() {
            if !dist.contains_key(&w) {
                dist.insert(w, d + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

/// Class draw frequencies over `draws` samples, and the three-standard-error
/// check against `expected`.
pub fn frequencies_match(counts: &[usize], expected: &[f64], draws: usize) -> Result<(), String> {
    for (c, (&k, &p)) in counts.iter().zip(expected).enumerate() {
        let f = k as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        if (f - p).abs() > 3.0 * se {
            return Err(format!("class {c}: frequency {f:.4}, expected {p:.4} +- {:.4}", 3.0 * se));
        }
    }
    Ok(())
}

pub mod dense {
    //! Whole-graph eval-mode forward pass over a materialised adjacency
    //! matrix, reading parameters by name.

    use cyto_autodiff::ParamStore;
    use cytomap::gnn::{GnnArch, GnnConfig};
    use cytomap::graph::CortexGraph;

    pub type Mat = Vec<Vec<f64>>;

    pub struct Params<'a>(pub &'a ParamStore<f64>);

    impl Params<'_> {
        fn t(&self, name: &str) -> (Vec<usize>, Vec<f64>) {
            let id = self.0.find(name).unwrap_or_else(|| panic!("missing parameter {name}"));
            let v = self.0.value(id);
            (v.shape().to_vec(), v.data().to_vec())
        }

        pub fn mat(&self, name: &str) -> Mat {
            let (s, d) = self.t(name);
            d.chunks(s[1]).map(|r| r.to_vec()).collect()
        }

        pub fn vec(&self, name: &str) -> Vec<f64> {
            self.t(name).1
        }

        pub fn has(&self, name: &str) -> bool {
            self.0.find(name).is_some()
        }
    }

    pub fn adjacency(g: &CortexGraph) -> Mat {
        let n = g.len();
        let mut a = vec![vec![0.0; n]; n];
        for (u, v) in g.edges() {
            a[u as usize][v as usize] = 1.0;
            a[v as usize][u as usize] = 1.0;
        }
        a
    }

    pub fn matmul(a: &Mat, b: &Mat) -> Mat {
        let (n, k, m) = (a.len(), b.len(), b[0].len());
        let mut c = vec![vec![0.0; m]; n];
        for i in 0..n {
            for p in 0..k {
                let x = a[i][p];
                if x != 0.0 {
                    for j in 0..m {
                        c[i][j] += x * b[p][j];
                    }
                }
            }
        }
        c
    }

    fn add_bias(mut x: Mat, b: &[f64]) -> Mat {
        x.iter_mut().for_each(|r| r.iter_mut().zip(b).for_each(|(v, b)| *v += b));
        x
    }

    fn add(a: &Mat, b: &Mat) -> Mat {
        a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
    }

    fn relu(x: Mat) -> Mat {
        x.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect()
    }

    pub fn batch_norm(p: &Params, name: &str, x: Mat) -> Mat {
        let (g, b, m, v) = (p.vec(&format!("{name}.gamma")), p.vec(&format!("{name}.beta")), p.vec(&format!("{name}.running_mean")), p.vec(&format!("{name}.running_var")));
        x.into_iter()
            .map(|r| r.into_iter().enumerate().map(|(c, x)| (x - m[c]) / (v[c] + 1e-5).sqrt() * g[c] + b[c]).collect())
            .collect()
    }

    pub fn linear(p: &Params, name: &str, x: &Mat) -> Mat {
        let y = matmul(x, &p.mat(&format!("{name}.weight")));
        if p.has(&format!("{name}.bias")) { add_bias(y, &p.vec(&format!("{name}.bias"))) } else { y }
    }

    pub fn sage(p: &Params, name: &str, adj: &Mat, x: &Mat) -> Mat {
        let mut mean = matmul(adj, x);
        for (i, row) in mean.iter_mut().enumerate() {
            let d: f64 = adj[i].iter().sum();
            row.iter_mut().for_each(|v| *v = if d > 0.0 { *v / d } else { 0.0 });
        }
        add(&linear(p, &format!("{name}.self"), x), &linear(p, &format!("{name}.neigh"), &mean))
    }

    /// Attention weights `alpha[i][j][k]` (zero off the neighbourhood) and
    /// the layer output.
    pub fn gat(p: &Params, name: &str, adj: &Mat, x: &Mat, heads: usize, f: usize) -> (Vec<Vec<Vec<f64>>>, Mat) {
        let wh = matmul(x, &p.mat(&format!("{name}.weight.weight")));
        let (asrc, adst, bias) = (p.vec(&format!("{name}.att_src")), p.vec(&format!("{name}.att_dst")), p.vec(&format!("{name}.bias")));
        let n = x.len();
        let dot = |row: &[f64], a: &[f64], k: usize| (0..f).map(|c| row[k * f + c] * a[k * f + c]).sum::<f64>();
        let mut alpha = vec![vec![vec![0.0; heads]; n]; n];
        let mut out = vec![vec![0.0; heads * f]; n];
        for i in 0..n {
            let nb: Vec<usize> = (0..n).filter(|&j| j == i || adj[i][j] != 0.0).collect();
            for k in 0..heads {
                let e: Vec<f64> = nb
                    .iter()
                    .map(|&j| {
                        let s = dot(&wh[i], &adst, k) + dot(&wh[j], &asrc, k);
                        if s > 0.0 { s } else { 0.2 * s }
                    })
                    .collect();
                let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = e.iter().map(|v| (v - mx).exp()).sum();
                for (&j, &ej) in nb.iter().zip(&e) {
                    let a = (ej - mx).exp() / z;
                    alpha[i][j][k] = a;
                    for c in 0..f {
                        out[i][k * f + c] += a * wh[j][k * f + c];
                    }
                }
            }
            for (v, b) in out[i].iter_mut().zip(&bias) {
                *v += b;
            }
        }
        (alpha, out)
    }

    fn layer(c: &GnnConfig, p: &Params, name: &str, adj: &Mat, x: &Mat) -> Mat {
        match c.architecture {
            GnnArch::Gat => gat(p, name, adj, x, c.heads, c.head_dim).1,
            _ => sage(p, name, adj, x),
        }
    }

    /// Eval-mode logits of every node for a CY-only model.
    pub fn logits(c: &GnnConfig, store: &ParamStore<f64>, g: &CortexGraph) -> Mat {
        let p = Params(store);
        let adj = adjacency(g);
        let feats = g.features.as_ref().unwrap();
        let mut h: Mat = (0..g.len()).map(|u| feats.row(u).iter().map(|&v| v as f64).collect()).collect();
        match (c.architecture, c.residual) {
            (GnnArch::Mlp, _) => {
                for l in 1..=c.layers {
                    h = relu(batch_norm(&p, &format!("mlp.{l}.bn"), linear(&p, &format!("mlp.{l}"), &h)));
                }
            }
            (_, false) => {
                for l in 1..=c.layers {
                    h = relu(batch_norm(&p, &format!("gnn.{l}.bn"), layer(c, &p, &format!("gnn.{l}"), &adj, &h)));
                }
            }
            (_, true) => {
                for l in 1..=c.layers {
                    let a = if l == 1 { h.clone() } else { relu(batch_norm(&p, &format!("block.{l}.bn"), h.clone())) };
                    let short = if p.has(&format!("block.{l}.shortcut.weight")) { linear(&p, &format!("block.{l}.shortcut"), &a) } else { h.clone() };
                    h = add(&short, &layer(c, &p, &format!("block.{l}.layer"), &adj, &a));
                }
                h = relu(batch_norm(&p, "block.out.bn", h));
            }
        }
        linear(&p, "classifier", &h)
    }
}

/// Overwrites every parameter (including running statistics) with
/// reproducible random values of moderate scale.
pub fn randomize_store(store: &mut cyto_autodiff::ParamStore<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let name = store.get(id).name.clone();
        let fan = store.value(id).shape().first().copied().unwrap_or(1).max(1) as f64;
        for v in store.get_mut(id).value.data_mut() {
            *v = if name.ends_with("running_var") {
                rng.random_range(0.5..2.0)
            } else if name.ends_with("gamma") {
                rng.random_range(0.5..1.5)
            } else {
                rng.random_range(-1.0..1.0) * (3.0 / fan).sqrt()
            };
        }
    }
}

/// Attaches random features of width `dim` to every node.
pub fn random_features(g: &mut CortexGraph, dim: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = cytomap::graph::NodeMatrix::zeros(g.len(), dim);
    for u in 0..g.len() {
        let row: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        m.set_row(u, &row);
    }
    g.features = Some(m);
}
