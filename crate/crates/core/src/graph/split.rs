use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GraphDataset;
use crate::error::{GpaError, Result};

/// A train/validation partition of graph indices, both sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_indices: Vec<usize>,
    pub valid_indices: Vec<usize>,
    pub seed: u64,
}

/// Uniform random split with `round(valid_fraction * N)` validation graphs.
pub fn split(dataset: &GraphDataset, valid_fraction: f64, seed: u64) -> Result<SplitSpec> {
    let n = dataset.len();
    let valid = if valid_fraction > 0.0 && valid_fraction < 1.0 {
        (valid_fraction * n as f64).round() as usize
    } else {
        0
    };
    if valid == 0 || valid >= n {
        return Err(GpaError::DegenerateSplit {
            train: n.saturating_sub(valid),
            valid,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut valid_indices = order[..valid].to_vec();
    let mut train_indices = order[valid..].to_vec();
    valid_indices.sort_unstable();
    train_indices.sort_unstable();
    Ok(SplitSpec {
        train_indices,
        valid_indices,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffled k-fold partition; the first `len % k` folds get one extra item.
pub fn kfold(indices: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k == 0 || k > indices.len() {
        return Err(GpaError::TooManyFolds { k, n: indices.len() });
    }
    let mut order = indices.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = order.len() / k;
    let extra = order.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let test = order[start..start + size].to_vec();
        let train = order[..start].iter().chain(&order[start + size..]).copied().collect();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(folds)
}
