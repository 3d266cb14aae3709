use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::GraphDataset;
use crate::error::{GpaError, Result};

/// How node input features are built for datasets without usable attributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturePolicy {
    /// One-hot node labels, followed by raw attributes when those exist.
    OneHotLabels,
    /// One-hot degree with degrees `>= cap` sharing the last slot.
    OneHotDegree { cap: usize },
}

pub fn build_features(raw: &GraphDataset, policy: FeaturePolicy) -> Result<GraphDataset> {
    let mut graphs = Vec::with_capacity(raw.len());
    match policy {
        FeaturePolicy::OneHotLabels => {
            if raw.raw.len() != raw.len() || raw.raw.iter().any(|r| r.labels.is_none()) {
                return Err(GpaError::MissingNodeLabels);
            }
            let vocab: Vec<i64> = raw
                .raw
                .iter()
                .flat_map(|r| r.labels.as_ref().unwrap().iter().copied())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let attr_dim = if raw.raw.iter().all(|r| r.attributes.is_some()) {
                raw.raw[0].attribute_dim
            } else {
                0
            };
            let dim = vocab.len() + attr_dim;
            for (g, r) in raw.graphs.iter().zip(&raw.raw) {
                let mut feats = vec![0.0; g.num_nodes() * dim];
                for (v, l) in r.labels.as_ref().unwrap().iter().enumerate() {
                    let slot = vocab.binary_search(l).unwrap();
                    let row = &mut feats[v * dim..(v + 1) * dim];
                    row[slot] = 1.0;
                    if attr_dim > 0 {
                        let attrs = r.attributes.as_ref().unwrap();
                        row[vocab.len()..].copy_from_slice(&attrs[v * attr_dim..(v + 1) * attr_dim]);
                    }
                }
                graphs.push(g.with_features(dim, feats)?);
            }
        }
        FeaturePolicy::OneHotDegree { cap } => {
            let dim = cap + 1;
            for g in &raw.graphs {
                let mut feats = vec![0.0; g.num_nodes() * dim];
                for v in 0..g.num_nodes() {
                    feats[v * dim + g.degree(v).min(cap)] = 1.0;
                }
                graphs.push(g.with_features(dim, feats)?);
            }
        }
    }
    let mut out = GraphDataset::new(raw.name.clone(), graphs, raw.num_classes)?;
    out.raw = raw.raw.clone();
    out.dropped_self_loops = raw.dropped_self_loops;
    Ok(out)
}
