//! Graph augmentation operators and the pair selection space.
//!
//! Five operators are combined into 15 unordered pairs (with replacement).
//! Pairs are indexed in row order `(1,1), (1,2), ..., (1,5), (2,2), ..., (5,5)`
//! where types are numbered Identical=1 .. AttMask=5.

mod ops;
mod rng;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GpaError, Result};
use crate::graph::Graph;

pub use ops::{attr_mask, edge_perturb, identical, node_drop, perturb_count, subgraph_rw, subgraph_size, Dropped};
pub use rng::{hash64, RngStream};

pub const NUM_AUG_TYPES: usize = 5;
pub const NUM_PAIRS: usize = NUM_AUG_TYPES * (NUM_AUG_TYPES + 1) / 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum AugType {
    Identical = 1,
    NodeDrop = 2,
    EdgePert = 3,
    Subgraph = 4,
    AttMask = 5,
}

impl AugType {
    pub const ALL: [AugType; NUM_AUG_TYPES] = [
        AugType::Identical,
        AugType::NodeDrop,
        AugType::EdgePert,
        AugType::Subgraph,
        AugType::AttMask,
    ];

    /// 1-based index used in reports.
    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get((i as usize).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AugType::Identical => "Identical",
            AugType::NodeDrop => "NodeDrop",
            AugType::EdgePert => "EdgePert",
            AugType::Subgraph => "Subgraph",
            AugType::AttMask => "AttMask",
        }
    }
}

impl From<AugType> for u8 {
    fn from(t: AugType) -> u8 {
        t.index()
    }
}

impl TryFrom<u8> for AugType {
    type Error = String;

    fn try_from(i: u8) -> Result<Self, String> {
        Self::from_index(i).ok_or_else(|| format!("augmentation index {i} not in 1..=5"))
    }
}

impl fmt::Display for AugType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unordered augmentation pair in canonical form (`first <= second`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "(AugType, AugType)", into = "(AugType, AugType)")]
pub struct AugPair {
    first: AugType,
    second: AugType,
}

impl AugPair {
    pub fn new(a: AugType, b: AugType) -> Self {
        Self {
            first: a.min(b),
            second: a.max(b),
        }
    }

    pub fn first(self) -> AugType {
        self.first
    }

    pub fn second(self) -> AugType {
        self.second
    }

    /// Position among the 15 pairs, 0-based.
    pub fn index(self) -> usize {
        let (i, j) = (self.first.index() as usize - 1, self.second.index() as usize - 1);
        // rows before `i` hold K, K-1, ..., K-i+1 pairs
        i * NUM_AUG_TYPES - i * i.saturating_sub(1) / 2 + (j - i)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        all_pairs().get(index).copied()
    }

    pub fn name(self) -> String {
        format!("{}-{}", self.first.name(), self.second.name())
    }
}

impl From<AugPair> for (AugType, AugType) {
    fn from(p: AugPair) -> Self {
        (p.first, p.second)
    }
}

impl From<(AugType, AugType)> for AugPair {
    fn from((a, b): (AugType, AugType)) -> Self {
        AugPair::new(a, b)
    }
}

impl fmt::Display for AugPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.first, self.second)
    }
}

/// Pairs over the first `k` augmentation types, in row order.
pub fn enumerate_pairs(k: usize) -> Result<Vec<AugPair>> {
    if k == 0 || k > NUM_AUG_TYPES {
        return Err(GpaError::Config(format!(
            "augmentation pool size {k} not in 1..={NUM_AUG_TYPES}"
        )));
    }
    let types = &AugType::ALL[..k];
    Ok(types
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| types[i..].iter().map(move |&b| AugPair::new(a, b)))
        .collect())
}

/// All 15 pairs in row order.
pub fn all_pairs() -> &'static [AugPair; NUM_PAIRS] {
    use std::sync::OnceLock;
    static PAIRS: OnceLock<[AugPair; NUM_PAIRS]> = OnceLock::new();
    PAIRS.get_or_init(|| enumerate_pairs(NUM_AUG_TYPES).unwrap().try_into().expect("15 pairs"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugConfig {
    /// Fraction of nodes/edges perturbed.
    pub ratio: f64,
    /// Random-walk step budget per restart, as a multiple of the node count.
    pub walk_budget_factor: usize,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            ratio: 0.2,
            walk_budget_factor: 10,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(GpaError::Config(format!("ratio {} not in [0, 1]", self.ratio)));
        }
        Ok(())
    }
}

/// Applies one operator.
pub fn apply(g: &Graph, ty: AugType, cfg: &AugConfig, rng: &mut RngStream) -> Graph {
    match ty {
        AugType::Identical => identical(g),
        AugType::NodeDrop => node_drop(g, cfg.ratio, rng).graph,
        AugType::EdgePert => edge_perturb(g, cfg.ratio, rng),
        AugType::Subgraph => subgraph_rw(g, cfg, rng),
        AugType::AttMask => attr_mask(g, cfg.ratio, rng),
    }
}

/// Two views of `g`, one per pair member, each drawn from its own stream.
pub fn apply_pair(
    g: &Graph,
    pair: AugPair,
    cfg: &AugConfig,
    rng_i: &mut RngStream,
    rng_j: &mut RngStream,
) -> (Graph, Graph) {
    (apply(g, pair.first, cfg, rng_i), apply(g, pair.second, cfg, rng_j))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_pairs_in_row_order() {
        let pairs = enumerate_pairs(5).unwrap();
        assert_eq!(pairs.len(), 15);
        assert_eq!(pairs[0], AugPair::new(AugType::Identical, AugType::Identical));
        assert_eq!(pairs[14], AugPair::new(AugType::AttMask, AugType::AttMask));
        assert_eq!(pairs[5], AugPair::new(AugType::NodeDrop, AugType::NodeDrop));
        assert_eq!(
            enumerate_pairs(1).unwrap(),
            vec![AugPair::new(AugType::Identical, AugType::Identical)]
        );
        assert_eq!(enumerate_pairs(3).unwrap().len(), 6);
        assert!(enumerate_pairs(0).is_err());
    }

    #[test]
    fn pair_index_roundtrip() {
        for (i, p) in all_pairs().iter().enumerate() {
            assert_eq!(p.index(), i, "{p}");
            assert_eq!(AugPair::from_index(i), Some(*p));
        }
        assert_eq!(AugPair::from_index(15), None);
    }

    #[test]
    fn pair_is_canonical() {
        let p = AugPair::new(AugType::AttMask, AugType::NodeDrop);
        assert_eq!(p.first(), AugType::NodeDrop);
        assert_eq!(p, AugPair::new(AugType::NodeDrop, AugType::AttMask));
    }

    #[test]
    fn serializes_by_index() {
        let p = AugPair::new(AugType::Identical, AugType::NodeDrop);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1,2]");
        let back: AugPair = serde_json::from_str("[3,1]").unwrap();
        assert_eq!(back, AugPair::new(AugType::Identical, AugType::EdgePert));
        assert!(serde_json::from_str::<AugPair>("[0,1]").is_err());
    }

    #[test]
    fn identical_pair_views() {
        let g = crate::graph::fixtures::triangle();
        let pair = AugPair::new(AugType::Identical, AugType::Identical);
        let (a, b) = apply_pair(
            &g,
            pair,
            &AugConfig::default(),
            &mut RngStream::new(0, 0, 0, 0),
            &mut RngStream::new(0, 0, 0, 1),
        );
        assert_eq!(a, g);
        assert_eq!(b, g);
    }
}
