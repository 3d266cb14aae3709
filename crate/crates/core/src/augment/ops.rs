use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;

use super::{AugConfig, RngStream};
use crate::graph::Graph;

// Tolerance against products like 0.2 * 10 landing a hair off an integer.
const ROUND_EPS: f64 = 1e-9;

/// `floor(ratio * n)`, clamped to `n`.
pub fn perturb_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64 + ROUND_EPS).floor().max(0.0) as usize).min(n)
}

/// `ceil((1 - ratio) * n)`, clamped to `1..=n` for nonempty graphs.
pub fn subgraph_size(ratio: f64, n: usize) -> usize {
    let t = ((1.0 - ratio) * n as f64 - ROUND_EPS).ceil().max(0.0) as usize;
    t.clamp(n.min(1), n)
}

pub fn identical(g: &Graph) -> Graph {
    g.clone()
}

/// Output of [`node_drop`]; `fell_back` marks a request that would have
/// removed every node and returned the input instead.
#[derive(Clone, Debug, PartialEq)]
pub struct Dropped {
    pub graph: Graph,
    pub fell_back: bool,
}

/// Removes `floor(ratio * n)` uniformly chosen nodes and their edges.
/// Survivors keep their relative order.
pub fn node_drop(g: &Graph, ratio: f64, rng: &mut RngStream) -> Dropped {
    let n = g.num_nodes();
    let k = perturb_count(ratio, n);
    if k >= n {
        return Dropped {
            graph: g.clone(),
            fell_back: true,
        };
    }
    if k == 0 {
        return Dropped {
            graph: g.clone(),
            fell_back: false,
        };
    }
    let mut dropped = vec![false; n];
    for v in sample(rng, n, k) {
        dropped[v] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&v| !dropped[v]).collect();
    Dropped {
        graph: g.induced_subgraph(&keep),
        fell_back: false,
    }
}

/// Removes `b = floor(ratio * m)` uniform edges, then adds `min(b, available)`
/// uniform non-edges of the reduced graph. Nodes and features are untouched.
pub fn edge_perturb(g: &Graph, ratio: f64, rng: &mut RngStream) -> Graph {
    let n = g.num_nodes();
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let m = edges.len();
    let b = perturb_count(ratio, m);
    if b == 0 {
        return g.clone();
    }
    let mut removed = vec![false; m];
    for i in sample(rng, m, b) {
        removed[i] = true;
    }
    let mut kept: Vec<(usize, usize)> = edges
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(&e, _)| e)
        .collect();

    let all_pairs = n * n.saturating_sub(1) / 2;
    let available = all_pairs - kept.len();
    let add = b.min(available);
    if add > 0 {
        let present: HashSet<(usize, usize)> = kept.iter().copied().collect();
        if available < 4 * add {
            let candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .filter(|e| !present.contains(e))
                .collect();
            kept.extend(sample(rng, candidates.len(), add).into_iter().map(|i| candidates[i]));
        } else {
            let mut chosen = HashSet::with_capacity(add);
            let mut added = Vec::with_capacity(add);
            while added.len() < add {
                let u = rng.gen_range(0..n);
                let v = rng.gen_range(0..n);
                if u == v {
                    continue;
                }
                let e = (u.min(v), u.max(v));
                if !present.contains(&e) && chosen.insert(e) {
                    added.push(e);
                }
            }
            kept.extend(added);
        }
    }
    g.with_edges(&kept).expect("edge endpoints stay in range")
}

/// Induced subgraph on the nodes collected by a random walk.
///
/// The walk starts at a uniform node and collects `ceil((1 - ratio) * n)`
/// distinct nodes. After `walk_budget_factor * n` steps without finishing, or
/// at a node without neighbors, it restarts from a uniform unvisited node.
pub fn subgraph_rw(g: &Graph, cfg: &AugConfig, rng: &mut RngStream) -> Graph {
    let n = g.num_nodes();
    let target = subgraph_size(cfg.ratio, n);
    if target >= n {
        return g.clone();
    }
    let budget = (cfg.walk_budget_factor * n).max(1);
    let mut visited = vec![false; n];
    let mut collected = Vec::with_capacity(target);

    let mut current = rng.gen_range(0..n);
    visited[current] = true;
    collected.push(current);
    let mut steps = 0usize;
    while collected.len() < target {
        let nbrs = g.neighbors(current);
        if steps < budget && !nbrs.is_empty() {
            current = nbrs[rng.gen_range(0..nbrs.len())];
            steps += 1;
        } else {
            let unvisited: Vec<usize> = (0..n).filter(|&v| !visited[v]).collect();
            current = unvisited[rng.gen_range(0..unvisited.len())];
            steps = 0;
        }
        if !visited[current] {
            visited[current] = true;
            collected.push(current);
        }
    }
    collected.sort_unstable();
    g.induced_subgraph(&collected)
}

/// Zeroes the feature rows of `floor(ratio * n)` uniformly chosen nodes.
pub fn attr_mask(g: &Graph, ratio: f64, rng: &mut RngStream) -> Graph {
    let n = g.num_nodes();
    let k = perturb_count(ratio, n);
    if k == 0 {
        return g.clone();
    }
    let nodes = sample(rng, n, k).into_vec();
    g.with_masked_rows(&nodes)
}
