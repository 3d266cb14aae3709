#![allow(dead_code)]
pub mod augcases;
pub mod gradcases;

use std::path::PathBuf;

use gpa_core::augment::AugPair;
use gpa_core::encoder::{EncoderConfig, EncoderParams};
use gpa_core::graph::{build_features, parse_tudataset, FeaturePolicy, Graph, GraphDataset};
use gpa_core::selector::{SelectorParams, ViewContext};
use gpa_core::trainer::GpaObjective;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    std::env::var_os("GPA_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn mutag() -> GraphDataset {
    let raw = parse_tudataset(data_dir().join("MUTAG"), "MUTAG").expect("MUTAG under data/");
    build_features(&raw, FeaturePolicy::OneHotLabels).unwrap()
}

/// Five small MUTAG graphs with a tiny encoder and score net.
pub struct Toy {
    pub graphs: Vec<Graph>,
    pub enc: EncoderParams,
    pub theta: SelectorParams,
    pub ctx: ViewContext,
}

pub fn toy(seed: u64) -> Toy {
    let ds = mutag();
    let graphs: Vec<Graph> = ds.graphs[..5].to_vec();
    let cfg = EncoderConfig {
        num_layers: 2,
        hidden_dim: 8,
        feature_dim: ds.feature_dim,
        gin_eps: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enc = EncoderParams::init(cfg, &mut rng).unwrap();
    let mut theta = SelectorParams::init(8, 8, &mut rng);
    // zero biases put masked neighbourhoods exactly on relu kinks
    for p in [&mut enc.params, &mut theta.params] {
        for (name, t) in p.iter_mut() {
            if name.contains(".b") {
                t.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
        }
    }
    Toy {
        graphs,
        enc,
        theta,
        ctx: ViewContext {
            seed,
            epoch: 0,
            aug: Default::default(),
        },
    }
}

impl Toy {
    /// Graphs 0..3 train (with the given pairs), 3..5 validate.
    pub fn objective(&self, pairs: Vec<AugPair>) -> GpaObjective<'_> {
        GpaObjective::new(
            self.graphs[..3].iter().collect(),
            vec![0, 1, 2],
            pairs,
            self.graphs[3..].iter().collect(),
            vec![3, 4],
            self.ctx,
            self.enc.config,
            0.5,
        )
    }
}
