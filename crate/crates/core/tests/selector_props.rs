mod common;

use common::gradcases::{check_composition, Composition};
use gpa_core::augment::{AugConfig, NUM_PAIRS};
use gpa_core::encoder::{EncoderConfig, EncoderParams};
use gpa_core::graph::Graph;
use gpa_core::selector::{batch_scores, ScoringMode, SelectorParams, ViewContext};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Setup {
    graphs: Vec<Graph>,
    enc: EncoderParams,
    theta: SelectorParams,
    ctx: ViewContext,
}

fn setup(seed: u64, n: usize) -> Setup {
    let ds = common::mutag();
    let start = (seed as usize * 7) % (ds.len() - n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EncoderConfig {
        num_layers: 2,
        hidden_dim: 12,
        feature_dim: ds.feature_dim,
        gin_eps: 0.0,
    };
    Setup {
        graphs: ds.graphs[start..start + n].to_vec(),
        enc: EncoderParams::init(cfg, &mut rng).unwrap(),
        theta: SelectorParams::init(12, 10, &mut rng),
        ctx: ViewContext {
            seed,
            epoch: seed % 3,
            aug: AugConfig::default(),
        },
    }
}

impl Setup {
    fn scores(&self, ids: &[usize], mode: ScoringMode) -> Vec<[f64; NUM_PAIRS]> {
        let refs: Vec<&Graph> = ids.iter().map(|&i| &self.graphs[i]).collect();
        batch_scores(&refs, ids, &self.enc, &self.theta, &self.ctx, mode)
            .unwrap()
            .into_iter()
            .map(|s| s.probs)
            .collect()
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_lie_on_the_simplex(seed in 0u64..1000) {
        let s = setup(seed, 6);
        for p in s.scores(&[0, 1, 2, 3, 4, 5], ScoringMode::Cached) {
            prop_assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batching_and_order_do_not_matter(seed in 0u64..1000) {
        let s = setup(seed, 5);
        let all = s.scores(&[0, 1, 2, 3, 4], ScoringMode::Cached);
        let rev = s.scores(&[4, 3, 2, 1, 0], ScoringMode::Cached);
        for i in 0..5 {
            let alone = s.scores(&[i], ScoringMode::Cached);
            prop_assert!(close(&all[i], &alone[0], 1e-12));
            prop_assert!(close(&all[i], &rev[4 - i], 1e-12));
        }
    }

    #[test]
    fn cached_views_match_per_pair_scoring(seed in 0u64..1000) {
        let s = setup(seed, 3);
        let a = s.scores(&[0, 1, 2], ScoringMode::Cached);
        let b = s.scores(&[0, 1, 2], ScoringMode::PerPair);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(close(x, y, 1e-12));
        }
    }
}

#[test]
fn zero_output_layer_gives_uniform_scores() {
    let mut s = setup(2, 4);
    for (name, t) in s.theta.params.iter_mut() {
        if name.starts_with("score.w2") || name.starts_with("score.b2") {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }
    for p in s.scores(&[0, 1, 2, 3], ScoringMode::Cached) {
        assert!(p.iter().all(|&x| (x - 1.0 / 15.0).abs() < 1e-15));
    }
}

#[test]
fn score_gradients_match_finite_differences() {
    let ds = common::mutag();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let graphs: Vec<Graph> = ds.graphs[10..13].to_vec();
    let mut checked = 0;
    while checked < 3 {
        if let Some(err) = check_composition(Composition::Scores, &graphs, &mut rng).unwrap() {
            assert!(err < 1e-4, "{err}");
            checked += 1;
        }
    }
}
