use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{all_pairs, AugPair, AugType, NUM_PAIRS};
use crate::encoder::EncoderParams;
use crate::error::Result;
use crate::graph::GraphDataset;
use crate::selector::{batch_scores, ScoreVector, ScoringMode, SelectorParams, ViewContext};
use crate::trainer::{train_fixed_pair, GpaConfig, LossRecord};

use super::probe::{extract_embeddings, probe_with_predictions, ProbeResult};

const SCORING_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct AugReport {
    pub per_graph: Vec<(usize, AugPair, ScoreVector)>,
    pub histogram: [usize; NUM_PAIRS],
}

/// Scores every graph and counts argmax pairs.
pub fn augmentation_report(
    dataset: &GraphDataset,
    enc: &EncoderParams,
    theta: &SelectorParams,
    ctx: &ViewContext,
) -> Result<AugReport> {
    let mut per_graph = Vec::with_capacity(dataset.len());
    let mut histogram = [0; NUM_PAIRS];
    let ids: Vec<usize> = (0..dataset.len()).collect();
    for chunk in ids.chunks(SCORING_CHUNK) {
        let graphs: Vec<_> = chunk.iter().map(|&i| &dataset.graphs[i]).collect();
        for s in batch_scores(&graphs, chunk, enc, theta, ctx, ScoringMode::Cached)? {
            let pair = s.argmax();
            histogram[pair.index()] += 1;
            per_graph.push((s.graph_id, pair, s));
        }
    }
    Ok(AugReport { per_graph, histogram })
}

fn score_header() -> Vec<String> {
    all_pairs().iter().map(|p| format!("p_{}", p.name())).collect()
}

impl AugReport {
    /// `graph_id, pair_index, pair_name, p_<pair> x 15`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["graph_id".to_string(), "pair_index".into(), "pair_name".into()];
        header.extend(score_header());
        w.write_record(&header)?;
        for (id, pair, s) in &self.per_graph {
            let mut row = vec![id.to_string(), pair.index().to_string(), pair.name()];
            row.extend(s.probs.iter().map(|p| p.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_histogram_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["pair_index", "pair_name", "count"])?;
        for (p, c) in all_pairs().iter().zip(self.histogram) {
            w.write_record([p.index().to_string(), p.name(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairProbeConfig {
    pub repeats: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for PairProbeConfig {
    fn default() -> Self {
        Self {
            repeats: 1,
            folds: 10,
            seed: 0,
        }
    }
}

/// Per-graph probe correctness under each fixed pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairProbeGrid {
    pub pairs: Vec<AugPair>,
    /// `[num_graphs][pairs.len()]`: fraction of repeats in which the graph's
    /// held-out prediction was correct.
    pub matrix: Vec<Vec<f64>>,
    /// Columns whose positive pair is trivially identical.
    pub degenerate: Vec<bool>,
    /// Loss history of the first repeat of each column.
    pub histories: Vec<Vec<LossRecord>>,
}

/// For each pair, trains plain contrastive models on the whole dataset with
/// that pair for every graph and records held-out probe correctness.
pub fn probe_fixed_pairs(
    dataset: &GraphDataset,
    pairs: &[AugPair],
    cfg: &GpaConfig,
    probe: &PairProbeConfig,
) -> Result<PairProbeGrid> {
    let n = dataset.len();
    let all: Vec<usize> = (0..n).collect();
    let mut matrix = vec![vec![0.0; pairs.len()]; n];
    let mut histories = Vec::with_capacity(pairs.len());
    let repeats = probe.repeats.max(1);
    for (col, &pair) in pairs.iter().enumerate() {
        log::info!("fixed pair {pair}");
        for r in 0..repeats {
            let mut run_cfg = *cfg;
            run_cfg.train.seed = cfg.train.seed.wrapping_add(r as u64);
            let state = train_fixed_pair(dataset, &all, pair, &run_cfg)?;
            if let Some(msg) = &state.aborted {
                return Err(crate::GpaError::NonFiniteGradient(msg.clone()));
            }
            let (x, labels) = extract_embeddings(dataset, &state.encoder, SCORING_CHUNK)?;
            let outcome = probe_with_predictions(&x, &labels, probe.folds, probe.seed.wrapping_add(r as u64))?;
            for (row, ok) in matrix.iter_mut().zip(&outcome.correct) {
                row[col] += f64::from(u8::from(*ok)) / repeats as f64;
            }
            if r == 0 {
                histories.push(state.loss_history);
            }
        }
    }
    let degenerate = pairs
        .iter()
        .map(|p| p.first() == AugType::Identical && p.second() == AugType::Identical)
        .collect();
    Ok(PairProbeGrid {
        pairs: pairs.to_vec(),
        matrix,
        degenerate,
        histories,
    })
}

impl PairProbeGrid {
    /// Rows are graphs, columns pairs (in the order given).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["graph_id".to_string()];
        header.extend(self.pairs.iter().map(|p| {
            if p.first() == AugType::Identical && p.second() == AugType::Identical {
                format!("{} (degenerate)", p.name())
            } else {
                p.name()
            }
        }));
        w.write_record(&header)?;
        for (i, row) in self.matrix.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One row of the ablation comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub result: ProbeResult,
}

/// Markdown table of probe accuracies (in percent).
pub fn write_ablation_table(rows: &[AblationRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "| method | mean accuracy (%) | std (%) | folds |")?;
    writeln!(out, "|---|---|---|---|")?;
    for r in rows {
        writeln!(
            out,
            "| {} | {:.2} | {:.2} | {} |",
            r.method,
            100.0 * r.result.mean,
            100.0 * r.result.std,
            r.result.fold_accuracies.len()
        )?;
    }
    Ok(())
}
