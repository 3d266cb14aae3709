//! Instance-level contrastive loss and the hard/soft training objectives.

use crate::augment::{all_pairs, AugPair, NUM_PAIRS};
use crate::autodiff::{Bound, Tape, Tensor, Var};
use crate::encoder::{embed_graphs, EncoderConfig, EncoderParams, GraphBatch};
use crate::error::{GpaError, Result};
use crate::graph::Graph;
use crate::selector::{
    batch_scores, scores_from_batch, scoring_batch, ScoringMode, SelectorParams, ViewContext, SCORING_VIEWS,
};

/// Per-graph losses `[B, 1]`:
/// `l_n = -S_nn + log sum_{n' != n} exp(S_nn')` with `S = cos(z_i, z_j) / tau`.
/// The positive pair is left out of the denominator.
pub fn ntxent_per_graph(tape: &mut Tape, zi: Var, zj: Var, tau: f64) -> Result<Var> {
    let (b, bj) = (tape.value(zi).rows(), tape.value(zj).rows());
    if b != bj {
        return Err(GpaError::Shape(format!("view batches of {b} and {bj} rows")));
    }
    if b < 2 {
        return Err(GpaError::InsufficientBatch(b));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(GpaError::Config(format!("temperature must be positive, got {tau}")));
    }
    let inv_tau = 1.0 / tau;
    let cos = tape.cosine_similarity(zi, zj)?;
    let s = tape.scale(cos, inv_tau);
    // cos <= 1, so shifting by 1/tau keeps every exponent <= 0
    let shifted = tape.add_scalar(s, -inv_tau);
    let e = tape.exp(shifted);
    let off_diag: Vec<f64> = (0..b * b).map(|i| if i % (b + 1) == 0 { 0.0 } else { 1.0 }).collect();
    let mask = tape.constant(Tensor::matrix(b, b, off_diag)?);
    let neg = tape.mul(e, mask)?;
    let denom = tape.sum_rows(neg)?;
    let lse = tape.log(denom);
    let lse = tape.add_scalar(lse, inv_tau);
    let pos = tape.diag(s)?;
    let pos = tape.scale(pos, -1.0);
    tape.add(lse, pos)
}

/// Mean of [`ntxent_per_graph`].
pub fn ntxent_loss(tape: &mut Tape, zi: Var, zj: Var, tau: f64) -> Result<Var> {
    let per = ntxent_per_graph(tape, zi, zj, tau)?;
    tape.mean(per)
}

/// Forward-only loss of two embedding matrices.
pub fn ntxent_value(zi: &Tensor, zj: &Tensor, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(zi.clone());
    let b = tape.constant(zj.clone());
    let l = ntxent_loss(&mut tape, a, b, tau)?;
    Ok(tape.value(l).item())
}

fn check_batch(graphs: &[&Graph], ids: &[usize]) -> Result<()> {
    if graphs.len() != ids.len() {
        return Err(GpaError::Shape("graphs and ids differ in length".into()));
    }
    if graphs.len() < 2 {
        return Err(GpaError::InsufficientBatch(graphs.len()));
    }
    Ok(())
}

/// Contrastive loss with a given pair per graph, recorded on `tape`.
#[allow(clippy::too_many_arguments)]
pub fn hard_loss_on_tape(
    tape: &mut Tape,
    graphs: &[&Graph],
    ids: &[usize],
    pairs: &[AugPair],
    ctx: &ViewContext,
    w: &Bound,
    enc_cfg: &EncoderConfig,
    tau: f64,
) -> Result<Var> {
    check_batch(graphs, ids)?;
    if pairs.len() != graphs.len() {
        return Err(GpaError::Shape(format!(
            "{} pairs for {} graphs",
            pairs.len(),
            graphs.len()
        )));
    }
    let b = graphs.len();
    let mut views = Vec::with_capacity(2 * b);
    let mut second = Vec::with_capacity(b);
    for ((g, &id), &pair) in graphs.iter().zip(ids).zip(pairs) {
        let (x, y) = ctx.pair_views(g, id, pair);
        views.push(x);
        second.push(y);
    }
    views.extend(second);
    let refs: Vec<&Graph> = views.iter().collect();
    let z = embed_graphs(tape, &GraphBatch::new(&refs)?, w, enc_cfg, true)?;
    let zi = tape.gather_rows(z, &(0..b).collect::<Vec<_>>())?;
    let zj = tape.gather_rows(z, &(b..2 * b).collect::<Vec<_>>())?;
    ntxent_loss(tape, zi, zj, tau)
}

/// Scores the batch without gradients, takes argmax pairs, and returns the
/// contrastive loss under them together with the chosen pairs.
pub fn hard_train_loss(
    graphs: &[&Graph],
    ids: &[usize],
    enc: &EncoderParams,
    theta: &SelectorParams,
    ctx: &ViewContext,
    tau: f64,
) -> Result<(f64, Vec<AugPair>)> {
    let pairs: Vec<AugPair> = batch_scores(graphs, ids, enc, theta, ctx, ScoringMode::Cached)?
        .iter()
        .map(|s| s.argmax())
        .collect();
    let mut tape = Tape::new();
    let w = tape.bind_frozen(&enc.params);
    let l = hard_loss_on_tape(&mut tape, graphs, ids, &pairs, ctx, &w, &enc.config, tau)?;
    Ok((tape.value(l).item(), pairs))
}

/// All `30 B` pair views of a batch; row `(2p + m) * B + n` holds member `m`
/// of pair `p` for graph `n`.
pub fn pair_batch(graphs: &[&Graph], ids: &[usize], ctx: &ViewContext) -> Result<GraphBatch> {
    check_batch(graphs, ids)?;
    let mut views = Vec::with_capacity(2 * NUM_PAIRS * graphs.len());
    for &pair in all_pairs() {
        let (first, second): (Vec<Graph>, Vec<Graph>) = graphs
            .iter()
            .zip(ids)
            .map(|(g, &id)| ctx.pair_views(g, id, pair))
            .unzip();
        views.extend(first);
        views.extend(second);
    }
    let refs: Vec<&Graph> = views.iter().collect();
    GraphBatch::new(&refs)
}

/// Per-pair, per-graph losses `[B, 1]` (one per pair, in pair order) from a
/// prebuilt [`pair_batch`] in a single encoder pass.
pub fn pair_losses_from_batch(
    tape: &mut Tape,
    batch: &GraphBatch,
    w: &Bound,
    enc_cfg: &EncoderConfig,
    tau: f64,
) -> Result<Vec<Var>> {
    let rows = batch.num_graphs();
    if !rows.is_multiple_of(2 * NUM_PAIRS) {
        return Err(GpaError::Shape(format!(
            "{rows} pair views is not a multiple of {}",
            2 * NUM_PAIRS
        )));
    }
    let b = rows / (2 * NUM_PAIRS);
    let z = embed_graphs(tape, batch, w, enc_cfg, true)?;
    let mut out = Vec::with_capacity(NUM_PAIRS);
    for p in 0..NUM_PAIRS {
        let start = 2 * p * b;
        let zi = tape.gather_rows(z, &(start..start + b).collect::<Vec<_>>())?;
        let zj = tape.gather_rows(z, &(start + b..start + 2 * b).collect::<Vec<_>>())?;
        out.push(ntxent_per_graph(tape, zi, zj, tau)?);
    }
    Ok(out)
}

/// [`pair_losses_from_batch`] on freshly drawn views.
pub fn pair_losses_on_tape(
    tape: &mut Tape,
    graphs: &[&Graph],
    ids: &[usize],
    ctx: &ViewContext,
    w: &Bound,
    enc_cfg: &EncoderConfig,
    tau: f64,
) -> Result<Vec<Var>> {
    pair_losses_from_batch(tape, &pair_batch(graphs, ids, ctx)?, w, enc_cfg, tau)
}

fn weighted_sum(tape: &mut Tape, losses: Vec<Var>, weights: Var, b: usize) -> Result<Var> {
    let shape = tape.value(weights).shape().to_vec();
    if shape != [b, NUM_PAIRS] {
        return Err(GpaError::Shape(format!("pair weights {shape:?} for {b} graphs")));
    }
    let mut total: Option<Var> = None;
    for (p, l) in losses.into_iter().enumerate() {
        let a = tape.select_column(weights, p)?;
        let weighted = tape.mul(a, l)?;
        let s = tape.sum(weighted);
        total = Some(match total {
            None => s,
            Some(t) => tape.add(t, s)?,
        });
    }
    Ok(tape.scale(total.expect("15 pairs"), 1.0 / b as f64))
}

/// `(1 / B) sum_n sum_p weights[n, p] * l_p(n)` for a `[B, 15]` weight matrix.
#[allow(clippy::too_many_arguments)]
pub fn soft_loss_with_weights(
    tape: &mut Tape,
    graphs: &[&Graph],
    ids: &[usize],
    ctx: &ViewContext,
    w: &Bound,
    enc_cfg: &EncoderConfig,
    weights: Var,
    tau: f64,
) -> Result<Var> {
    let losses = pair_losses_on_tape(tape, graphs, ids, ctx, w, enc_cfg, tau)?;
    weighted_sum(tape, losses, weights, graphs.len())
}

/// Scoring and pair views of one batch, built once and reused across
/// evaluations at different parameters.
#[derive(Clone, Debug)]
pub struct SoftViews {
    pub scoring: GraphBatch,
    pub pairs: GraphBatch,
}

impl SoftViews {
    pub fn new(graphs: &[&Graph], ids: &[usize], ctx: &ViewContext) -> Result<Self> {
        Ok(Self {
            scoring: scoring_batch(graphs, ids, ctx)?,
            pairs: pair_batch(graphs, ids, ctx)?,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.scoring.num_graphs() / SCORING_VIEWS
    }
}

/// [`soft_loss_on_tape`] over prebuilt views.
pub fn soft_loss_from_views(
    tape: &mut Tape,
    views: &SoftViews,
    w: &Bound,
    enc_cfg: &EncoderConfig,
    theta: &Bound,
    tau: f64,
) -> Result<Var> {
    let scores = scores_from_batch(tape, &views.scoring, w, enc_cfg, theta)?;
    let losses = pair_losses_from_batch(tape, &views.pairs, w, enc_cfg, tau)?;
    weighted_sum(tape, losses, scores, views.num_graphs())
}

/// Score-weighted loss; gradients reach both `w` and `theta`.
#[allow(clippy::too_many_arguments)]
pub fn soft_loss_on_tape(
    tape: &mut Tape,
    graphs: &[&Graph],
    ids: &[usize],
    ctx: &ViewContext,
    w: &Bound,
    enc_cfg: &EncoderConfig,
    theta: &Bound,
    tau: f64,
) -> Result<Var> {
    let views = SoftViews::new(graphs, ids, ctx)?;
    soft_loss_from_views(tape, &views, w, enc_cfg, theta, tau)
}

/// Forward-only score-weighted loss.
pub fn soft_weighted_loss(
    graphs: &[&Graph],
    ids: &[usize],
    enc: &EncoderParams,
    theta: &SelectorParams,
    ctx: &ViewContext,
    tau: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let w = tape.bind_frozen(&enc.params);
    let th = tape.bind_frozen(&theta.params);
    let l = soft_loss_on_tape(&mut tape, graphs, ids, ctx, &w, &enc.config, &th, tau)?;
    Ok(tape.value(l).item())
}
