//! JSON run configuration shared by the CLI subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{all_pairs, AugPair};
use crate::error::{GpaError, Result};
use crate::graph::{build_features, parse_tudataset, FeaturePolicy, GraphDataset};
use crate::trainer::GpaConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Directory holding `<name>_A.txt` and friends; relative paths resolve
    /// against the working directory.
    pub dir: PathBuf,
    pub name: String,
    #[serde(default = "default_features")]
    pub features: FeaturePolicy,
    /// Keep only the first `max_graphs` graphs.
    #[serde(default)]
    pub max_graphs: Option<usize>,
}

fn default_features() -> FeaturePolicy {
    FeaturePolicy::OneHotLabels
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub folds: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { folds: 10, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairsConfig {
    pub repeats: Option<usize>,
    /// Pairs to probe; all 15 when absent.
    pub pairs: Option<Vec<AugPair>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(flatten)]
    pub model: GpaConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub probe_pairs: PairsConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GpaError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GpaError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Parses the dataset, builds features and applies `max_graphs`.
    pub fn load_dataset(&self) -> Result<GraphDataset> {
        let raw = parse_tudataset(&self.dataset.dir, &self.dataset.name)?;
        let ds = build_features(&raw, self.dataset.features)?;
        match self.dataset.max_graphs {
            Some(n) => ds.truncated(n),
            None => Ok(ds),
        }
    }

    pub fn pairs(&self) -> Vec<AugPair> {
        self.probe_pairs.pairs.clone().unwrap_or_else(|| all_pairs().to_vec())
    }

    /// Overrides the training and probe seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.train.seed = seed;
        self.probe.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_json(r#"{"dataset": {"dir": "data/MUTAG", "name": "MUTAG"}}"#).unwrap();
        assert_eq!(cfg.model, GpaConfig::default());
        assert_eq!(cfg.probe.folds, 10);
        assert_eq!(cfg.pairs().len(), 15);
        assert_eq!(cfg.dataset.features, FeaturePolicy::OneHotLabels);
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_json(
            r#"{
                "dataset": {"dir": "d", "name": "X", "features": {"one_hot_degree": {"cap": 5}}, "max_graphs": 60},
                "encoder": {"num_layers": 2, "hidden_dim": 32},
                "selector": {"hidden_dim": 16},
                "augment": {"ratio": 0.1},
                "train": {"batch_size": 16, "epochs": 3, "optimizer": "sgd"},
                "probe_pairs": {"repeats": 2, "pairs": [[1, 2], [5, 5]]}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.model.encoder.hidden_dim, 32);
        assert_eq!(cfg.model.train.batch_size, 16);
        assert_eq!(cfg.model.augment.ratio, 0.1);
        assert_eq!(cfg.dataset.max_graphs, Some(60));
        assert_eq!(cfg.pairs().len(), 2);
    }

    #[test]
    fn bad_json_is_config_error() {
        assert!(matches!(RunConfig::from_json("{"), Err(GpaError::Config(_))));
    }
}
