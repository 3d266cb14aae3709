mod common;

use common::augcases::random_graph;
use gpa_core::encoder::{EncoderConfig, EncoderParams};
use gpa_core::eval::extract_embeddings;
use gpa_core::graph::Graph;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn encoder(seed: u64, feature_dim: usize) -> EncoderParams {
    let cfg = EncoderConfig {
        num_layers: 3,
        hidden_dim: 16,
        feature_dim,
        gin_eps: 0.0,
    };
    let mut enc = EncoderParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for (name, t) in enc.params.iter_mut() {
        if name.contains(".b") {
            t.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
        }
    }
    enc
}

/// `g` with node `v` renamed to `perm[v]`.
fn relabel(g: &Graph, perm: &[usize]) -> Graph {
    let d = g.feature_dim();
    let mut feats = vec![0.0; g.num_nodes() * d];
    for v in 0..g.num_nodes() {
        feats[perm[v] * d..(perm[v] + 1) * d].copy_from_slice(g.feature_row(v));
    }
    let edges: Vec<_> = g.edges().map(|(u, v)| (perm[u], perm[v])).collect();
    Graph::from_edges(g.num_nodes(), &edges, d, feats, g.label()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn node_permutation_invariance(seed in any::<u64>(), project in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 20);
        let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
        perm.shuffle(&mut rng);
        let enc = encoder(seed, g.feature_dim());
        let a = enc.embed(&[&g], project).unwrap();
        let b = enc.embed(&[&relabel(&g, &perm)], project).unwrap();
        prop_assert!(max_diff(a.data(), b.data()) < 1e-10);
    }

    #[test]
    fn batch_independence(seed in any::<u64>(), size in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graphs: Vec<Graph> = (0..size).map(|_| random_graph(&mut rng, 15)).collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        let enc = encoder(seed, 3);
        let together = enc.embed(&refs, true).unwrap();
        for (i, g) in graphs.iter().enumerate() {
            let alone = enc.embed(&[g], true).unwrap();
            prop_assert!(max_diff(together.row(i), alone.data()) < 1e-10);
        }
    }
}

#[test]
fn evaluation_embeddings_ignore_batch_size() {
    let ds = common::mutag().truncated(70).unwrap();
    let enc = encoder(4, ds.feature_dim);
    let (a, la) = extract_embeddings(&ds, &enc, 1).unwrap();
    let (b, lb) = extract_embeddings(&ds, &enc, 32).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.shape(), &[70, 16]);
    assert!(max_diff(a.data(), b.data()) < 1e-10);
}

#[test]
fn isolated_graph_embeds_finitely() {
    let g = Graph::from_edges(4, &[], 3, vec![1.0; 12], None).unwrap();
    let z = encoder(0, 3).embed(&[&g], false).unwrap();
    assert!(z.data().iter().all(|x| x.is_finite()));
}
