//! Per-graph augmentation-pair scoring.
//!
//! Each graph gets nine scoring views: the original, one draw of each of the
//! four stochastic operators, and a second draw of each for the same-type
//! pairs. Every pair `(i, j)` is scored from `[z_i || z_j]` by a two-layer
//! network and the 15 logits are normalized by a softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{all_pairs, apply, AugConfig, AugPair, AugType, RngStream, NUM_PAIRS};
use crate::autodiff::{glorot, Bound, ParamSet, Tape, Tensor, Var};
use crate::encoder::{affine, embed_graphs, EncoderConfig, EncoderParams, GraphBatch};
use crate::error::{GpaError, Result};
use crate::graph::Graph;

/// Scoring views per graph.
pub const SCORING_VIEWS: usize = 9;

/// Stream slot of the view used as member `member` (0 or 1) of `pair` when
/// the whole batch is augmented with that pair.
pub fn pair_view_slot(pair: AugPair, member: usize) -> u64 {
    16 + 2 * pair.index() as u64 + member as u64
}

/// Which of the nine scoring views feeds member `member` of `pair`.
fn scoring_view(pair: AugPair, member: usize) -> usize {
    let (a, b) = (pair.first(), pair.second());
    let ty = if member == 0 { a } else { b };
    let first_draw = ty.index() as usize - 1;
    if a == b && member == 1 && ty != AugType::Identical {
        first_draw + 4
    } else {
        first_draw
    }
}

fn scoring_view_type(view: usize) -> AugType {
    match view {
        0 => AugType::Identical,
        v => AugType::ALL[(v - 1) % 4 + 1],
    }
}

/// Shared randomness coordinates for one round of augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewContext {
    pub seed: u64,
    pub epoch: u64,
    pub aug: AugConfig,
}

impl ViewContext {
    pub fn stream(&self, graph_id: usize, slot: u64) -> RngStream {
        RngStream::new(self.seed, graph_id as u64, self.epoch, slot)
    }

    /// The nine scoring views of a graph.
    pub fn scoring_views(&self, g: &Graph, graph_id: usize) -> Vec<Graph> {
        (0..SCORING_VIEWS)
            .map(|v| apply(g, scoring_view_type(v), &self.aug, &mut self.stream(graph_id, v as u64)))
            .collect()
    }

    /// The two views of `g` under `pair`, from the pair's own stream slots.
    pub fn pair_views(&self, g: &Graph, graph_id: usize, pair: AugPair) -> (Graph, Graph) {
        let a = apply(
            g,
            pair.first(),
            &self.aug,
            &mut self.stream(graph_id, pair_view_slot(pair, 0)),
        );
        let b = apply(
            g,
            pair.second(),
            &self.aug,
            &mut self.stream(graph_id, pair_view_slot(pair, 1)),
        );
        (a, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    pub hidden_dim: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self { hidden_dim: 128 }
    }
}

/// Score network weights (`score.*`): `2D -> d`, relu, `d -> 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectorParams {
    pub params: ParamSet,
}

impl SelectorParams {
    pub fn init(embed_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let mut p = ParamSet::new();
        p.insert("score.w1", glorot(2 * embed_dim, hidden_dim, rng));
        p.insert("score.b1", Tensor::zeros(&[hidden_dim]));
        p.insert("score.w2", glorot(hidden_dim, 1, rng));
        p.insert("score.b2", Tensor::zeros(&[1]));
        Self { params: p }
    }

    pub fn embed_dim(&self) -> Option<usize> {
        self.params.get("score.w1").map(|w| w.rows() / 2)
    }
}

/// Per-graph probabilities over the 15 pairs, in pair order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub graph_id: usize,
    pub probs: [f64; NUM_PAIRS],
}

impl ScoreVector {
    pub fn argmax(&self) -> AugPair {
        select_argmax(self)
    }
}

/// Pair with the largest probability; ties go to the lowest pair index.
pub fn select_argmax(s: &ScoreVector) -> AugPair {
    let mut best = 0;
    for (i, &p) in s.probs.iter().enumerate() {
        if p > s.probs[best] {
            best = i;
        }
    }
    all_pairs()[best]
}

/// Softmax of 15 logits, computed with the tape's row softmax.
pub fn scores_from_logits(graph_id: usize, logits: &[f64; NUM_PAIRS]) -> ScoreVector {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(logits.to_vec()));
    let y = tape.row_softmax(x);
    ScoreVector {
        graph_id,
        probs: tape.value(y).data().try_into().unwrap(),
    }
}

/// Score-network logits for stacked pair inputs `[rows, 2D] -> [rows, 1]`.
fn score_net(tape: &mut Tape, pairs: Var, theta: &Bound) -> Result<Var> {
    let h = affine(tape, pairs, theta, "score.w1", "score.b1")?;
    let h = tape.relu(h);
    affine(tape, h, theta, "score.w2", "score.b2")
}

/// The `9 B` scoring views of a batch stacked graph-major.
pub fn scoring_batch(graphs: &[&Graph], graph_ids: &[usize], ctx: &ViewContext) -> Result<GraphBatch> {
    if graphs.len() != graph_ids.len() {
        return Err(GpaError::Shape("graphs and ids differ in length".into()));
    }
    let views: Vec<Graph> = graphs
        .iter()
        .zip(graph_ids)
        .flat_map(|(g, &id)| ctx.scoring_views(g, id))
        .collect();
    let view_refs: Vec<&Graph> = views.iter().collect();
    GraphBatch::new(&view_refs)
}

/// Pair probabilities `[B, 15]` from a prebuilt [`scoring_batch`].
pub fn scores_from_batch(
    tape: &mut Tape,
    batch: &GraphBatch,
    w: &Bound,
    enc_cfg: &EncoderConfig,
    theta: &Bound,
) -> Result<Var> {
    let n = batch.num_graphs();
    if !n.is_multiple_of(SCORING_VIEWS) {
        return Err(GpaError::Shape(format!(
            "{n} views is not a multiple of {SCORING_VIEWS}"
        )));
    }
    let z = embed_graphs(tape, batch, w, enc_cfg, true)?;
    pair_scores_from_embeddings(tape, z, n / SCORING_VIEWS, theta)
}

/// Pair probabilities `[B, 15]` for a batch of graphs, recorded on `tape` so
/// gradients reach both the encoder (`w`) and the score network (`theta`).
#[allow(clippy::too_many_arguments)]
pub fn score_batch_on_tape(
    tape: &mut Tape,
    graphs: &[&Graph],
    graph_ids: &[usize],
    ctx: &ViewContext,
    w: &Bound,
    enc_cfg: &EncoderConfig,
    theta: &Bound,
) -> Result<Var> {
    let batch = scoring_batch(graphs, graph_ids, ctx)?;
    scores_from_batch(tape, &batch, w, enc_cfg, theta)
}

/// Builds the 15 pair inputs per graph from cached scoring-view embeddings
/// (`[9B, D]`, graph-major) and returns row-softmaxed scores `[B, 15]`.
fn pair_scores_from_embeddings(tape: &mut Tape, z: Var, num_graphs: usize, theta: &Bound) -> Result<Var> {
    let mut left = Vec::with_capacity(num_graphs * NUM_PAIRS);
    let mut right = Vec::with_capacity(num_graphs * NUM_PAIRS);
    for n in 0..num_graphs {
        for &pair in all_pairs() {
            left.push(n * SCORING_VIEWS + scoring_view(pair, 0));
            right.push(n * SCORING_VIEWS + scoring_view(pair, 1));
        }
    }
    let a = tape.gather_rows(z, &left)?;
    let b = tape.gather_rows(z, &right)?;
    let x = tape.concat_rows(a, b)?;
    let logits = score_net(tape, x, theta)?;
    let logits = tape.reshape(logits, &[num_graphs, NUM_PAIRS])?;
    Ok(tape.row_softmax(logits))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoringMode {
    /// Nine encoder passes per graph, reused across pairs.
    Cached,
    /// Two encoder passes per pair (30 per graph); a reference path.
    PerPair,
}

/// Scores every graph with fixed parameters (no gradients).
pub fn batch_scores(
    graphs: &[&Graph],
    graph_ids: &[usize],
    enc: &EncoderParams,
    theta: &SelectorParams,
    ctx: &ViewContext,
    mode: ScoringMode,
) -> Result<Vec<ScoreVector>> {
    let mut tape = Tape::new();
    let w = tape.bind_frozen(&enc.params);
    let th = tape.bind_frozen(&theta.params);
    match mode {
        ScoringMode::Cached => {
            let probs = score_batch_on_tape(&mut tape, graphs, graph_ids, ctx, &w, &enc.config, &th)?;
            let t = tape.value(probs);
            Ok(graph_ids
                .iter()
                .enumerate()
                .map(|(n, &id)| ScoreVector {
                    graph_id: id,
                    probs: t.row(n).try_into().unwrap(),
                })
                .collect())
        }
        ScoringMode::PerPair => {
            let mut out = Vec::with_capacity(graphs.len());
            for (g, &id) in graphs.iter().zip(graph_ids) {
                let views = ctx.scoring_views(g, id);
                let mut row: Option<Var> = None;
                for &pair in all_pairs() {
                    let mut embed = |view: usize| -> Result<Var> {
                        let batch = GraphBatch::new(&[&views[view]])?;
                        embed_graphs(&mut tape, &batch, &w, &enc.config, true)
                    };
                    let za = embed(scoring_view(pair, 0))?;
                    let zb = embed(scoring_view(pair, 1))?;
                    let x = tape.concat_rows(za, zb)?;
                    let logit = score_net(&mut tape, x, &th)?;
                    row = Some(match row {
                        None => logit,
                        Some(prev) => tape.concat_rows(prev, logit)?,
                    });
                }
                let probs = tape.row_softmax(row.expect("15 pairs"));
                out.push(ScoreVector {
                    graph_id: id,
                    probs: tape.value(probs).data().try_into().unwrap(),
                });
            }
            Ok(out)
        }
    }
}

/// Scores a single graph.
pub fn score_pairs(
    g: &Graph,
    graph_id: usize,
    enc: &EncoderParams,
    theta: &SelectorParams,
    ctx: &ViewContext,
) -> Result<ScoreVector> {
    Ok(batch_scores(&[g], &[graph_id], enc, theta, ctx, ScoringMode::Cached)?.remove(0))
}
