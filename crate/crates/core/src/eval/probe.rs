use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::encoder::EncoderParams;
use crate::error::{GpaError, Result};
use crate::graph::{Fold, GraphDataset};

pub const L2: f64 = 1e-4;
pub const ITERATIONS: usize = 500;
pub const LEARNING_RATE: f64 = 0.5;

/// Pre-projection embeddings of the unaugmented graphs, in dataset order,
/// with their class labels.
pub fn extract_embeddings(
    dataset: &GraphDataset,
    enc: &EncoderParams,
    batch_size: usize,
) -> Result<(Tensor, Vec<usize>)> {
    let labels = dataset
        .graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            g.label()
                .ok_or_else(|| GpaError::InvalidDataset(format!("graph {i} has no label")))
        })
        .collect::<Result<Vec<_>>>()?;
    let d = enc.config.hidden_dim;
    let mut data = Vec::with_capacity(dataset.len() * d);
    for chunk in dataset.graphs.chunks(batch_size.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        data.extend_from_slice(enc.embed(&refs, false)?.data());
    }
    Ok((Tensor::matrix(dataset.len(), d, data)?, labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the fold accuracies.
    pub std: f64,
    /// Seed the folds were actually built with (after any retry).
    pub seed: u64,
}

impl ProbeResult {
    pub fn from_accuracies(fold_accuracies: Vec<f64>, seed: u64) -> Self {
        let n = fold_accuracies.len().max(1) as f64;
        let mean = fold_accuracies.iter().sum::<f64>() / n;
        let var = fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        Self {
            fold_accuracies,
            mean,
            std: var.sqrt(),
            seed,
        }
    }
}

/// Stratified folds: each class is shuffled and dealt round-robin, so class
/// proportions match across folds. Fails if a training part lacks a class.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 || k > labels.len() {
        return Err(GpaError::TooManyFolds { k, n: labels.len() });
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests = vec![Vec::new(); k];
    let mut next = 0;
    for c in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            tests[next % k].push(i);
            next += 1;
        }
    }
    let present: Vec<usize> = (0..num_classes).filter(|&c| labels.contains(&c)).collect();
    let mut folds = Vec::with_capacity(k);
    for test in tests {
        let mut test = test;
        test.sort_unstable();
        let train: Vec<usize> = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
        if test.is_empty() || present.iter().any(|c| !train.iter().any(|&i| labels[i] == *c)) {
            return Err(GpaError::StratificationFailed { k });
        }
        folds.push(Fold { train, test });
    }
    Ok(folds)
}

/// Multinomial logistic regression on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `[d, c]`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    classes: usize,
}

impl LogisticModel {
    /// Full-batch gradient descent on the mean cross-entropy plus
    /// `l2 / 2 * |W|^2`.
    pub fn fit(x: &Tensor, rows: &[usize], labels: &[usize], classes: usize) -> Self {
        let d = x.cols();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            mean.iter_mut().zip(x.row(r)).for_each(|(m, v)| *m += v / n);
        }
        let mut scale = vec![0.0; d];
        for &r in rows {
            scale
                .iter_mut()
                .zip(x.row(r))
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
        }
        scale
            .iter_mut()
            .for_each(|s| *s = if *s > 1e-24 { s.sqrt() } else { 1.0 });
        let mut model = Self {
            mean,
            scale,
            weights: vec![0.0; d * classes],
            bias: vec![0.0; classes],
            classes,
        };
        let xs: Vec<Vec<f64>> = rows.iter().map(|&r| model.standardize(x.row(r))).collect();
        let mut gw = vec![0.0; d * classes];
        let mut gb = vec![0.0; classes];
        for _ in 0..ITERATIONS {
            gw.iter_mut().for_each(|g| *g = 0.0);
            gb.iter_mut().for_each(|g| *g = 0.0);
            for (xi, &r) in xs.iter().zip(rows) {
                let mut p = model.probs_standardized(xi);
                p[labels[r]] -= 1.0;
                for (j, &xj) in xi.iter().enumerate() {
                    for (c, pc) in p.iter().enumerate() {
                        gw[j * classes + c] += xj * pc / n;
                    }
                }
                gb.iter_mut().zip(&p).for_each(|(g, pc)| *g += pc / n);
            }
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= LEARNING_RATE * (g + L2 * *w);
            }
            for (b, g) in model.bias.iter_mut().zip(&gb) {
                *b -= LEARNING_RATE * g;
            }
        }
        model
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn probs_standardized(&self, x: &[f64]) -> Vec<f64> {
        let mut logits = self.bias.clone();
        for (j, &xj) in x.iter().enumerate() {
            for (c, l) in logits.iter_mut().enumerate() {
                *l += xj * self.weights[j * self.classes + c];
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits
            .iter_mut()
            .map(|l| {
                *l = (*l - max).exp();
                *l
            })
            .sum();
        logits.iter_mut().for_each(|l| *l /= total);
        logits
    }

    /// Most probable class; ties go to the lowest class index.
    pub fn predict(&self, row: &[f64]) -> usize {
        let p = self.probs_standardized(&self.standardize(row));
        let mut best = 0;
        for (c, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = c;
            }
        }
        best
    }
}

/// Fold accuracies plus, for every graph, whether its held-out prediction
/// was correct.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome {
    pub result: ProbeResult,
    pub correct: Vec<bool>,
}

/// k-fold cross-validated linear probe with per-graph correctness.
pub fn probe_with_predictions(x: &Tensor, labels: &[usize], k: usize, seed: u64) -> Result<ProbeOutcome> {
    if x.rows() != labels.len() {
        return Err(GpaError::Shape(format!(
            "{} embeddings for {} labels",
            x.rows(),
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let distinct = (0..classes).filter(|c| labels.contains(c)).count();
    if distinct < 2 {
        return Err(GpaError::InvalidDataset(format!(
            "linear probe needs >= 2 classes, found {distinct}"
        )));
    }
    let (folds, used_seed) = match stratified_folds(labels, k, seed) {
        Err(GpaError::StratificationFailed { .. }) => {
            log::warn!("stratification failed with seed {seed}; retrying with {}", seed + 1);
            (stratified_folds(labels, k, seed + 1)?, seed + 1)
        }
        other => (other?, seed),
    };
    let mut correct = vec![false; labels.len()];
    let mut accuracies = Vec::with_capacity(k);
    for fold in &folds {
        let model = LogisticModel::fit(x, &fold.train, labels, classes);
        let mut hits = 0;
        for &i in &fold.test {
            let ok = model.predict(x.row(i)) == labels[i];
            correct[i] = ok;
            hits += ok as usize;
        }
        accuracies.push(hits as f64 / fold.test.len() as f64);
    }
    Ok(ProbeOutcome {
        result: ProbeResult::from_accuracies(accuracies, used_seed),
        correct,
    })
}

pub fn linear_probe_cv(x: &Tensor, labels: &[usize], k: usize, seed: u64) -> Result<ProbeResult> {
    Ok(probe_with_predictions(x, labels, k, seed)?.result)
}
