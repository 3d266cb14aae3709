//! Graph and dataset model.

mod features;
mod split;
mod tudataset;

use serde::{Deserialize, Serialize};

use crate::error::{GpaError, Result};

pub use features::{build_features, FeaturePolicy};
pub use split::{kfold, split, Fold, SplitSpec};
pub use tudataset::{parse_tudataset, write_tudataset};

/// An undirected graph in CSR form with a dense node-feature matrix.
///
/// Every undirected edge is stored in both directions, neighbor lists are
/// sorted, and there are no self-loops or duplicate entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    csr_offsets: Vec<usize>,
    csr_neighbors: Vec<usize>,
    feature_dim: usize,
    features: Vec<f64>,
    label: Option<usize>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Self-loops are dropped and
    /// duplicates (in either direction) are merged.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        feature_dim: usize,
        features: Vec<f64>,
        label: Option<usize>,
    ) -> Result<Self> {
        if features.len() != num_nodes * feature_dim {
            return Err(GpaError::InvalidDataset(format!(
                "feature matrix has {} values, expected {num_nodes}x{feature_dim}",
                features.len()
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(GpaError::InvalidDataset(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut csr_offsets = Vec::with_capacity(num_nodes + 1);
        let mut csr_neighbors = Vec::with_capacity(edges.len() * 2);
        csr_offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            csr_neighbors.extend(list);
            csr_offsets.push(csr_neighbors.len());
        }
        Ok(Self {
            num_nodes,
            csr_offsets,
            csr_neighbors,
            feature_dim,
            features,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Undirected edge count.
    pub fn num_edges(&self) -> usize {
        self.csr_neighbors.len() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, v: usize) -> &[f64] {
        &self.features[v * self.feature_dim..(v + 1) * self.feature_dim]
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn csr_offsets(&self) -> &[usize] {
        &self.csr_offsets
    }

    pub fn csr_neighbors(&self) -> &[usize] {
        &self.csr_neighbors
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.csr_neighbors[self.csr_offsets[v]..self.csr_offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.csr_offsets[v + 1] - self.csr_offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn with_features(&self, feature_dim: usize, features: Vec<f64>) -> Result<Self> {
        if features.len() != self.num_nodes * feature_dim {
            return Err(GpaError::InvalidDataset(format!(
                "feature matrix has {} values, expected {}x{feature_dim}",
                features.len(),
                self.num_nodes
            )));
        }
        Ok(Self {
            feature_dim,
            features,
            ..self.clone()
        })
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Zeroes the feature rows of the given nodes.
    pub fn with_masked_rows(&self, nodes: &[usize]) -> Self {
        let mut out = self.clone();
        for &v in nodes {
            out.features[v * self.feature_dim..(v + 1) * self.feature_dim].fill(0.0);
        }
        out
    }

    /// Induced subgraph on `keep`, which must be sorted and distinct. Nodes are
    /// relabeled `0..keep.len()` in the order given.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Self {
        const ABSENT: usize = usize::MAX;
        let mut remap = vec![ABSENT; self.num_nodes];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let mut csr_offsets = Vec::with_capacity(keep.len() + 1);
        let mut csr_neighbors = Vec::new();
        let mut features = Vec::with_capacity(keep.len() * self.feature_dim);
        csr_offsets.push(0);
        for &old in keep {
            // neighbor lists stay sorted because remap is monotone on `keep`
            csr_neighbors.extend(self.neighbors(old).iter().map(|&u| remap[u]).filter(|&u| u != ABSENT));
            csr_offsets.push(csr_neighbors.len());
            features.extend_from_slice(self.feature_row(old));
        }
        Self {
            num_nodes: keep.len(),
            csr_offsets,
            csr_neighbors,
            feature_dim: self.feature_dim,
            features,
            label: self.label,
        }
    }

    /// Replaces the edge set, keeping nodes and features.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Self> {
        Self::from_edges(
            self.num_nodes,
            edges,
            self.feature_dim,
            self.features.clone(),
            self.label,
        )
    }

    /// Checks the CSR invariants: monotone offsets, symmetric adjacency,
    /// sorted duplicate-free neighbor lists, no self-loops.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GpaError::InvalidDataset(msg));
        if self.csr_offsets.len() != self.num_nodes + 1 || self.csr_offsets[0] != 0 {
            return bad("offset array has wrong length or start".into());
        }
        if self.csr_offsets.windows(2).any(|w| w[0] > w[1]) {
            return bad("offsets are not nondecreasing".into());
        }
        if self.csr_offsets[self.num_nodes] != self.csr_neighbors.len() {
            return bad("last offset does not match neighbor count".into());
        }
        if self.features.len() != self.num_nodes * self.feature_dim {
            return bad("feature matrix has wrong size".into());
        }
        for v in 0..self.num_nodes {
            let nbrs = self.neighbors(v);
            if nbrs.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("neighbors of {v} unsorted or duplicated"));
            }
            for &u in nbrs {
                if u >= self.num_nodes {
                    return bad(format!("neighbor {u} of {v} out of range"));
                }
                if u == v {
                    return bad(format!("self-loop at {v}"));
                }
                if !self.has_edge(u, v) {
                    return bad(format!("edge ({v}, {u}) has no reverse"));
                }
            }
        }
        Ok(())
    }
}

/// Per-graph raw node data kept from the source files for feature building.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawNodeData {
    pub labels: Option<Vec<i64>>,
    pub attributes: Option<Vec<f64>>,
    pub attribute_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub feature_dim: usize,
    pub num_classes: usize,
    /// One entry per graph; empty when the dataset was not parsed from files.
    pub raw: Vec<RawNodeData>,
    /// Self-loops found in the edge file and dropped.
    pub dropped_self_loops: usize,
}

impl GraphDataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| GpaError::InvalidDataset("dataset has no graphs".into()))?;
        let feature_dim = first.feature_dim();
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(GpaError::InvalidDataset(format!(
                    "graph {i} has feature_dim {} != {feature_dim}",
                    g.feature_dim()
                )));
            }
            if let Some(l) = g.label() {
                if l >= num_classes {
                    return Err(GpaError::InvalidDataset(format!(
                        "graph {i} label {l} >= num_classes {num_classes}"
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            graphs,
            feature_dim,
            num_classes,
            raw: Vec::new(),
            dropped_self_loops: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Graph class labels; unlabeled graphs map to `None`.
    pub fn labels(&self) -> Vec<Option<usize>> {
        self.graphs.iter().map(Graph::label).collect()
    }

    /// The first `n` graphs as a new dataset.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        let mut out = Self::new(self.name.clone(), self.graphs[..n].to_vec(), self.num_classes)?;
        if !self.raw.is_empty() {
            out.raw = self.raw[..n].to_vec();
        }
        Ok(out)
    }

    pub fn stats(&self) -> DatasetStats {
        stats(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub num_graphs: usize,
    pub avg_nodes: f64,
    pub avg_edges: f64,
    pub num_classes: usize,
}

/// Averages over all graphs; edges are counted undirected.
pub fn stats(dataset: &GraphDataset) -> DatasetStats {
    let n = dataset.len().max(1) as f64;
    let nodes: usize = dataset.graphs.iter().map(Graph::num_nodes).sum();
    let edges: usize = dataset.graphs.iter().map(Graph::num_edges).sum();
    DatasetStats {
        name: dataset.name.clone(),
        num_graphs: dataset.len(),
        avg_nodes: nodes as f64 / n,
        avg_edges: edges as f64 / n,
        num_classes: dataset.num_classes,
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn from_edges_dedups_and_drops_loops() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 0), (1, 1), (1, 2)], 0, vec![], None).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
        g.validate().unwrap();
    }

    #[test]
    fn induced_subgraph_relabels() {
        let g = triangle();
        let sub = g.induced_subgraph(&[0, 2]);
        assert_eq!(sub.num_nodes(), 2);
        assert_eq!(sub.num_edges(), 1);
        assert!(sub.has_edge(0, 1));
        sub.validate().unwrap();
    }

    #[test]
    fn stats_of_fixture_pair() {
        let ds = GraphDataset::new("toy", vec![triangle(), path(2)], 2).unwrap();
        let s = stats(&ds);
        assert_eq!(s.num_graphs, 2);
        assert_eq!(s.avg_nodes, 2.5);
        assert_eq!(s.avg_edges, 2.0);
    }

    #[test]
    fn stats_single_node() {
        let g = Graph::from_edges(1, &[], 1, vec![1.0], Some(0)).unwrap();
        let s = stats(&GraphDataset::new("one", vec![g], 1).unwrap());
        assert_eq!((s.num_graphs, s.avg_nodes, s.avg_edges), (1, 1.0, 0.0));
    }

    #[test]
    fn dataset_rejects_mixed_widths() {
        let a = triangle();
        let b = Graph::from_edges(1, &[], 2, vec![0.0, 0.0], None).unwrap();
        assert!(GraphDataset::new("bad", vec![a, b], 1).is_err());
    }
}
