//! Random-point gradient checks for every tape primitive and for the
//! encoder + selector composition.

use gpa_core::autodiff::{grad_check_params, relu_margin, Bound, ParamSet, Tape, Tensor, Var};
use gpa_core::encoder::{EncoderConfig, EncoderParams};
use gpa_core::graph::Graph;
use gpa_core::selector::{scores_from_batch, SelectorParams, ViewContext};
use gpa_core::trainer::{soft_loss_from_views, SoftViews};
use gpa_core::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
/// Points whose relu inputs come closer than this to a kink are redrawn.
pub const MIN_MARGIN: f64 = 1e-5;

pub const PRIMITIVES: &[&str] = &[
    "matmul",
    "add",
    "add_row",
    "add_scalar",
    "scale",
    "mul",
    "relu",
    "log",
    "exp",
    "sum",
    "mean",
    "sum_rows",
    "row_softmax",
    "concat_rows",
    "gather_rows",
    "select_column",
    "diag",
    "segment_sum",
    "cosine_similarity",
    "reshape",
];

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// `sum(out * R)` for a fixed random `R`, so every output entry matters.
fn project(tape: &mut Tape, out: Var, r: &Tensor) -> Result<Var> {
    let r = tape.constant(r.clone());
    let p = tape.mul(out, r)?;
    Ok(tape.sum(p))
}

/// Largest relative error of one primitive at one random point.
pub fn check_primitive(name: &str, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut p = ParamSet::new();
    let (a_shape, b_shape): (Vec<usize>, Option<Vec<usize>>) = match name {
        "matmul" => (vec![3, 4], Some(vec![4, 2])),
        "add" | "mul" => (vec![3, 4], Some(vec![3, 4])),
        "add_row" => (vec![3, 4], Some(vec![4])),
        "concat_rows" => (vec![3, 2], Some(vec![3, 4])),
        "cosine_similarity" => (vec![3, 4], Some(vec![2, 4])),
        "row_softmax" => (vec![3, 5], None),
        "gather_rows" => (vec![4, 3], None),
        "diag" => (vec![3, 3], None),
        "segment_sum" => (vec![5, 3], None),
        _ => (vec![3, 4], None),
    };
    let a = match name {
        "log" => rand_tensor(rng, &a_shape, 0.5, 2.0),
        // keep relu inputs off the kink
        "relu" => rand_tensor(rng, &a_shape, 0.05, 1.0).map(|v| if rng_sign(v) { v } else { -v }),
        _ => rand_tensor(rng, &a_shape, -1.0, 1.0),
    };
    p.insert("a", a);
    if let Some(s) = &b_shape {
        p.insert("b", rand_tensor(rng, s, -1.0, 1.0));
    }
    let c: f64 = rng.gen_range(-2.0..2.0);
    let out_shape: Vec<usize> = match name {
        "matmul" => vec![3, 2],
        "sum" | "mean" => vec![1],
        "sum_rows" | "select_column" | "diag" => vec![3, 1],
        "concat_rows" => vec![3, 6],
        "gather_rows" => vec![5, 3],
        "segment_sum" => vec![3, 3],
        "cosine_similarity" => vec![3, 2],
        "reshape" => vec![2, 6],
        _ => a_shape.clone(),
    };
    let r = rand_tensor(rng, &out_shape, -1.0, 1.0);
    let name = name.to_string();
    grad_check_params(
        move |t: &mut Tape, b: &Bound| {
            let x = b["a"];
            let y = b.get("b").copied();
            let out = match name.as_str() {
                "matmul" => t.matmul(x, y.unwrap())?,
                "add" => t.add(x, y.unwrap())?,
                "add_row" => t.add_row(x, y.unwrap())?,
                "add_scalar" => t.add_scalar(x, c),
                "scale" => t.scale(x, c),
                "mul" => t.mul(x, y.unwrap())?,
                "relu" => t.relu(x),
                "log" => t.log(x),
                "exp" => t.exp(x),
                "sum" => t.sum(x),
                "mean" => t.mean(x)?,
                "sum_rows" => t.sum_rows(x)?,
                "row_softmax" => t.row_softmax(x),
                "concat_rows" => t.concat_rows(x, y.unwrap())?,
                "gather_rows" => t.gather_rows(x, &[0, 2, 2, 3, 1])?,
                "select_column" => t.select_column(x, 2)?,
                "diag" => t.diag(x)?,
                "segment_sum" => t.segment_sum(x, &[0, 2, 0, 1, 2], 3)?,
                "cosine_similarity" => t.cosine_similarity(x, y.unwrap())?,
                "reshape" => t.reshape(x, &[2, 6])?,
                other => panic!("unknown primitive {other}"),
            };
            project(t, out, &r)
        },
        &p,
        STEP,
    )
}

fn rng_sign(v: f64) -> bool {
    // deterministic sign from the mantissa
    (v.to_bits() >> 20) & 1 == 0
}

/// Small encoder + score net with random weights and biases.
pub fn random_model(rng: &mut ChaCha8Rng, feature_dim: usize) -> (EncoderParams, SelectorParams) {
    let cfg = EncoderConfig {
        num_layers: 2,
        hidden_dim: 4,
        feature_dim,
        gin_eps: 0.0,
    };
    let mut enc = EncoderParams::init(cfg, rng).unwrap();
    let mut theta = SelectorParams::init(4, 4, rng);
    for p in [&mut enc.params, &mut theta.params] {
        for (name, t) in p.iter_mut() {
            if name.contains(".b") {
                t.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
        }
    }
    (enc, theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Composition {
    /// Pair scores `[B, 15]` from encoder, projection and score net.
    Scores,
    /// Score-weighted contrastive loss over all 15 pairs.
    SoftLoss,
}

/// Gradient check of a composed model at a random point. Returns `None`
/// when the point lands too close to a relu kink.
pub fn check_composition(kind: Composition, graphs: &[Graph], rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
    let (enc, theta) = random_model(rng, graphs[0].feature_dim());
    let params = enc.params.merged(&theta.params);
    let ctx = ViewContext {
        seed: rng.gen(),
        epoch: 0,
        aug: Default::default(),
    };
    let refs: Vec<&Graph> = graphs.iter().collect();
    let ids: Vec<usize> = (0..graphs.len()).collect();
    let r = rand_tensor(rng, &[graphs.len(), 15], -1.0, 1.0);
    let cfg = enc.config;
    // the views do not depend on the parameters being perturbed
    let views = SoftViews::new(&refs, &ids, &ctx)?;
    let f = |t: &mut Tape, b: &Bound| -> Result<Var> {
        match kind {
            Composition::Scores => {
                let s = scores_from_batch(t, &views.scoring, b, &cfg, b)?;
                project(t, s, &r)
            }
            Composition::SoftLoss => soft_loss_from_views(t, &views, b, &cfg, b, 0.5),
        }
    };
    if relu_margin(f, &params)? < MIN_MARGIN {
        return Ok(None);
    }
    grad_check_params(f, &params, STEP).map(Some)
}
