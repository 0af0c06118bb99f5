mod common;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{bfs_oracle, frequencies_match, random_graph};
use cytomap::graph::*;

#[test]
fn khop_matches_bfs_on_random_graphs() {
    for seed in 0..100u64 {
        let n = 20 + (seed as usize * 7) % 180;
        let g = random_graph(n, n / 5, seed);
        let u = (seed as usize * 13) % n;
        for k in 0..=4 {
            let s = khop_subgraph(&g, u, k);
            let want = bfs_oracle(&g, u, k);
            let got: BTreeMap<u32, u32> = s.nodes.iter().zip(&s.hops).map(|(&v, &h)| (v, h)).collect();
            assert_eq!(got, want, "seed {seed} k {k}");
            assert_eq!(s.nodes[0], u as u32);
            assert!(s.hops.windows(2).all(|w| w[0] <= w[1]));
            let induced: BTreeSet<(u32, u32)> =
                g.edges().into_iter().filter(|(a, b)| want.contains_key(a) && want.contains_key(b)).collect();
            let local: BTreeSet<(u32, u32)> = s
                .edges
                .iter()
                .map(|&(a, b)| {
                    let (x, y) = (s.nodes[a as usize], s.nodes[b as usize]);
                    (x.min(y), x.max(y))
                })
                .collect();
            assert_eq!(local, induced);
        }
    }
}

#[test]
fn khop_small_cases() {
    let path = CortexGraph::new(vec![[0.0; 3]; 4], &[(0, 1), (1, 2), (2, 3)]).unwrap();
    let s = khop_subgraph(&path, 1, 0);
    assert_eq!((s.nodes.clone(), s.edges.len()), (vec![1], 0));
    let s = khop_subgraph(&path, 1, 1);
    assert_eq!(s.nodes, [1, 0, 2]);
    let named: BTreeSet<(u32, u32)> = s.edges.iter().map(|&(a, b)| {
        let (x, y) = (s.nodes[a as usize], s.nodes[b as usize]);
        (x.min(y), x.max(y))
    }).collect();
    assert_eq!(named, BTreeSet::from([(0, 1), (1, 2)]));
    assert_eq!(s.prefix_len(0), 1);
    assert_eq!(s.prefix_len(1), 3);
}

#[test]
fn fixed_fanout_is_a_subset_and_saturates() {
    for seed in 0..50u64 {
        let g = random_graph(120, 40, seed);
        let u = seed as usize % 120;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exact = khop_subgraph(&g, u, 3);
        let all: BTreeSet<u32> = exact.nodes.iter().copied().collect();
        let s = sample_fixed_neighbors(&g, u, 3, 3, &mut rng);
        assert!(s.nodes.iter().all(|v| all.contains(v)));
        let maxdeg = (0..g.len()).map(|v| g.degree(v)).max().unwrap();
        let full = sample_fixed_neighbors(&g, u, 3, maxdeg, &mut rng);
        assert_eq!(full, exact);
    }
}

#[test]
fn low_degree_node_keeps_all_neighbours() {
    let g = CortexGraph::new(vec![[0.0; 3]; 3], &[(0, 1), (0, 2)]).unwrap();
    for seed in 0..20 {
        let s = sample_fixed_neighbors(&g, 0, 1, 3, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(s.nodes, [0, 1, 2]);
    }
}

#[test]
fn fanout_inclusion_frequency() {
    // Star with six leaves: each leaf is kept with probability 3/6.
    let edges: Vec<(u32, u32)> = (1..=6).map(|v| (0, v)).collect();
    let g = CortexGraph::new(vec![[0.0; 3]; 7], &edges).unwrap();
    let trials = 10_000;
    let mut hits = [0usize; 7];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..trials {
        let s = sample_fixed_neighbors(&g, 0, 1, 3, &mut rng);
        assert_eq!(s.len(), 4);
        s.nodes[1..].iter().for_each(|&v| hits[v as usize] += 1);
    }
    let se = (0.25 / trials as f64).sqrt();
    for v in 1..=6 {
        let f = hits[v] as f64 / trials as f64;
        assert!((f - 0.5).abs() < 3.0 * se, "leaf {v}: {f}");
    }
}

#[test]
fn fixed_fanout_is_seed_deterministic() {
    let g = random_graph(150, 60, 5);
    let a = sample_fixed_neighbors(&g, 7, 3, 3, &mut ChaCha8Rng::seed_from_u64(1));
    let b = sample_fixed_neighbors(&g, 7, 3, 3, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a, b);
}

fn labelled(counts: &[usize]) -> CortexGraph {
    let n: usize = counts.iter().sum();
    let mut g = CortexGraph::new(vec![[0.0; 3]; n], &[]).unwrap();
    g.num_classes = counts.len();
    g.labels = counts.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat_n(Some(c as u32), k)).collect();
    g.splits = vec![Split::Train; n];
    g
}

fn class_draws(g: &CortexGraph, draws: usize, seed: u64) -> Vec<usize> {
    let mut counts = vec![0; g.num_classes];
    for u in BalancedStream::new(g, Split::Train, seed).unwrap().take(draws) {
        counts[g.labels[u].unwrap() as usize] += 1;
    }
    counts
}

#[test]
fn balanced_stream_equalises_classes() {
    let draws = 10_000;
    for counts in [[100, 100], [900, 100]] {
        let g = labelled(&counts);
        frequencies_match(&class_draws(&g, draws, 3), &[0.5, 0.5], draws).unwrap();
    }
    // Per-node probability is proportional to 1/count(y), so the classes
    // themselves come out uniform.
    let g = labelled(&[10, 20, 40]);
    let third = 1.0 / 3.0;
    frequencies_match(&class_draws(&g, draws, 4), &[third; 3], draws).unwrap();
}

#[test]
fn balanced_stream_node_probability_is_inverse_class_frequency() {
    let g = labelled(&[10, 20, 40]);
    let draws = 60_000;
    let mut hits = vec![0usize; g.len()];
    BalancedStream::new(&g, Split::Train, 8).unwrap().take(draws).for_each(|u| hits[u] += 1);
    // Expected per-node probability (1/count)/classes.
    let per_class: Vec<f64> = [10.0, 20.0, 40.0].iter().map(|c| 1.0 / (3.0 * c)).collect();
    let mut class_of = Vec::new();
    for (c, k) in [10, 20, 40].into_iter().enumerate() {
        class_of.extend(std::iter::repeat_n(c, k));
    }
    let worst = (0..g.len())
        .map(|u| {
            let p = per_class[class_of[u]];
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            ((hits[u] as f64 / draws as f64) - p).abs() / se
        })
        .fold(0.0f64, f64::max);
    // 70 nodes; allow the Bonferroni-sized band.
    assert!(worst < 4.0, "worst deviation {worst} standard errors");
}

#[test]
fn balanced_stream_rejects_absent_class_and_skips_featureless() {
    let mut g = labelled(&[5, 5, 5]);
    g.labels[10..].iter_mut().for_each(|l| *l = Some(0));
    assert!(BalancedStream::new(&g, Split::Train, 0).is_err());
    let mut g = labelled(&[5, 5]);
    let mut f = NodeMatrix::zeros(10, 2);
    (0..9).for_each(|u| f.set_row(u, &[1.0, 2.0]));
    g.features = Some(f);
    let s = BalancedStream::new(&g, Split::Train, 0).unwrap();
    assert_eq!(s.excluded(), 1);
    assert!(s.take(500).all(|u| u != 9));
}

#[test]
fn split_counts_follow_section_sums() {
    let mut g = random_graph(200, 10, 3);
    g.sections = (0..200).map(|u| (u as u32 * 7) % 10).collect();
    let assignment: BTreeMap<u32, Split> =
        (0..10).map(|s| (s, if s < 8 { Split::Train } else { Split::Test })).collect();
    g.split_nodes(&assignment).unwrap();
    let per_section = |s: u32| g.sections.iter().filter(|&&k| k == s).count();
    let train: usize = (0..8).map(per_section).sum();
    let counts = g.split_counts();
    assert_eq!(counts[&Split::Train], train);
    assert_eq!(counts[&Split::Test], 200 - train);
    let train_sections: BTreeSet<u32> = g.nodes_in(Split::Train).iter().map(|&u| g.sections[u]).collect();
    let test_sections: BTreeSet<u32> = g.nodes_in(Split::Test).iter().map(|&u| g.sections[u]).collect();
    assert!(train_sections.is_disjoint(&test_sections));
}

#[test]
fn graph_file_round_trips_bit_exactly() {
    let mut g = random_graph(60, 20, 11);
    g.num_classes = 3;
    g.sections = (0..60).map(|u| u as u32 / 10).collect();
    g.coords = (0..60).map(|u| [u as f64 * 1.5, 0.25 - u as f64]).collect();
    g.positions = (0..60).map(|u| [u as f64, 2.0 * u as f64, 1e-3 * u as f64]).collect();
    g.labels = (0..60).map(|u| (u % 4 != 0).then_some(u as u32 % 3)).collect();
    g.border = (0..60).map(|u| u % 5 == 0).collect();
    let mut f = NodeMatrix::zeros(60, 4);
    (0..60).filter(|u| u % 7 != 0).for_each(|u| f.set_row(u, &[u as f32, -1.0, 0.5, f32::MIN_POSITIVE]));
    g.features = Some(f);
    let mut co = NodeMatrix::zeros(60, 3);
    (0..60).for_each(|u| co.set_row(u, &[0.1, 0.2, u as f32]));
    g.prior_co = Some(co);
    let split: BTreeMap<u32, Split> = (0..6).map(|s| (s, Split::ALL[s as usize % 4])).collect();
    g.split_nodes(&split).unwrap();

    let mut a = Vec::new();
    write_graph(&mut a, &g).unwrap();
    let back = read_graph(&mut a.as_slice()).unwrap();
    assert_eq!(back, g);
    let mut b = Vec::new();
    write_graph(&mut b, &back).unwrap();
    assert_eq!(a, b);

    let mut j = Vec::new();
    write_split_map(&mut j, &split).unwrap();
    assert_eq!(read_split_map(&mut j.as_slice()).unwrap(), split);
}
