//! GIN encoder with sum readout and a two-layer projection head.
//!
//! Layer `k` computes `MLP_k((1 + eps) * h_v + sum_{u in N(v)} h_u)` where
//! `MLP_k` is affine-relu-affine. A relu separates consecutive layers; the
//! last layer's output is left signed. Graph embeddings sum node rows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot, Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{GpaError, Result};
use crate::graph::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    /// Input width; filled in from the dataset when left at 0.
    pub feature_dim: usize,
    pub gin_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_layers: 3,
            hidden_dim: 128,
            feature_dim: 0,
            gin_eps: 0.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 || self.feature_dim == 0 {
            return Err(GpaError::Config(format!(
                "encoder needs num_layers, hidden_dim and feature_dim >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn param(bound: &Bound, name: &str) -> Result<Var> {
    bound
        .get(name)
        .copied()
        .ok_or_else(|| GpaError::Shape(format!("parameter `{name}` not bound")))
}

/// `x @ w + b` with `w`, `b` looked up by prefix.
pub(crate) fn affine(tape: &mut Tape, x: Var, bound: &Bound, w: &str, b: &str) -> Result<Var> {
    let xw = tape.matmul(x, param(bound, w)?)?;
    tape.add_row(xw, param(bound, b)?)
}

fn insert_affine(p: &mut ParamSet, prefix: &str, i: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    p.insert(format!("{prefix}.w{i}"), glorot(fan_in, fan_out, rng));
    p.insert(format!("{prefix}.b{i}"), Tensor::zeros(&[fan_out]));
}

/// Encoder and projection-head weights (`enc.{k}.*`, `proj.*`).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub params: ParamSet,
}

impl EncoderParams {
    pub fn init(config: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut p = ParamSet::new();
        let d = config.hidden_dim;
        for k in 0..config.num_layers {
            let fan_in = if k == 0 { config.feature_dim } else { d };
            insert_affine(&mut p, &format!("enc.{k}"), "1", fan_in, d, rng);
            insert_affine(&mut p, &format!("enc.{k}"), "2", d, d, rng);
        }
        insert_affine(&mut p, "proj", "1", d, d, rng);
        insert_affine(&mut p, "proj", "2", d, d, rng);
        Ok(Self { config, params: p })
    }

    /// Forward-only graph embeddings.
    pub fn embed(&self, graphs: &[&Graph], project: bool) -> Result<Tensor> {
        let batch = GraphBatch::new(graphs)?;
        let mut tape = Tape::new();
        let bound = tape.bind_frozen(&self.params);
        let z = embed_graphs(&mut tape, &batch, &bound, &self.config, project)?;
        Ok(tape.value(z).clone())
    }
}

/// Several graphs stacked into one disjoint union.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub features: Tensor,
    /// Global neighbor id for each CSR entry.
    pub neighbor_src: Vec<usize>,
    /// Global owner node of each CSR entry.
    pub neighbor_dst: Vec<usize>,
    /// Graph index of each node, nondecreasing.
    pub graph_ids: Vec<usize>,
    /// `node_offsets[g]..node_offsets[g + 1]` are graph `g`'s nodes.
    pub node_offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&Graph]) -> Result<Self> {
        let dim = graphs.first().map_or(0, |g| g.feature_dim());
        let total: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let mut features = Vec::with_capacity(total * dim);
        let mut neighbor_src = Vec::new();
        let mut neighbor_dst = Vec::new();
        let mut graph_ids = Vec::with_capacity(total);
        let mut node_offsets = Vec::with_capacity(graphs.len() + 1);
        let mut offset = 0;
        node_offsets.push(0);
        for (gi, g) in graphs.iter().enumerate() {
            if g.feature_dim() != dim {
                return Err(GpaError::Shape(format!(
                    "graph {gi} has feature_dim {} in a batch of width {dim}",
                    g.feature_dim()
                )));
            }
            features.extend_from_slice(g.features());
            for v in 0..g.num_nodes() {
                for &u in g.neighbors(v) {
                    neighbor_src.push(offset + u);
                    neighbor_dst.push(offset + v);
                }
                graph_ids.push(gi);
            }
            offset += g.num_nodes();
            node_offsets.push(offset);
        }
        Ok(Self {
            features: Tensor::matrix(total, dim, features)?,
            neighbor_src,
            neighbor_dst,
            graph_ids,
            node_offsets,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.node_offsets.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.graph_ids.len()
    }
}

/// Node embeddings `[total_nodes, hidden_dim]`.
pub fn encode_nodes(tape: &mut Tape, batch: &GraphBatch, bound: &Bound, cfg: &EncoderConfig) -> Result<Var> {
    if batch.features.cols() != cfg.feature_dim {
        return Err(GpaError::Shape(format!(
            "batch feature width {} != encoder feature_dim {}",
            batch.features.cols(),
            cfg.feature_dim
        )));
    }
    let n = batch.num_nodes();
    let mut h = tape.constant(batch.features.clone());
    for k in 0..cfg.num_layers {
        let messages = tape.gather_rows(h, &batch.neighbor_src)?;
        let agg = tape.segment_sum(messages, &batch.neighbor_dst, n)?;
        let own = if cfg.gin_eps == 0.0 {
            h
        } else {
            tape.scale(h, 1.0 + cfg.gin_eps)
        };
        let pre = tape.add(own, agg)?;
        let prefix = format!("enc.{k}");
        let hidden = affine(tape, pre, bound, &format!("{prefix}.w1"), &format!("{prefix}.b1"))?;
        let hidden = tape.relu(hidden);
        h = affine(tape, hidden, bound, &format!("{prefix}.w2"), &format!("{prefix}.b2"))?;
        if k + 1 < cfg.num_layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Sum pooling: row `g` is the sum of the node rows with `graph_ids == g`.
pub fn readout(tape: &mut Tape, node_embeds: Var, graph_ids: &[usize], num_graphs: usize) -> Result<Var> {
    tape.segment_sum(node_embeds, graph_ids, num_graphs)
}

/// Projection head `D -> D`.
pub fn project(tape: &mut Tape, x: Var, bound: &Bound) -> Result<Var> {
    let h = affine(tape, x, bound, "proj.w1", "proj.b1")?;
    let h = tape.relu(h);
    affine(tape, h, bound, "proj.w2", "proj.b2")
}

/// Graph embeddings `[num_graphs, hidden_dim]`, projected when `project`.
pub fn embed_graphs(
    tape: &mut Tape,
    batch: &GraphBatch,
    bound: &Bound,
    cfg: &EncoderConfig,
    project_head: bool,
) -> Result<Var> {
    let nodes = encode_nodes(tape, batch, bound, cfg)?;
    let pooled = readout(tape, nodes, &batch.graph_ids, batch.num_graphs())?;
    if project_head {
        project(tape, pooled, bound)
    } else {
        Ok(pooled)
    }
}
