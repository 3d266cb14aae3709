use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GpaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GpaError {
    #[error("required dataset file missing: {}", .0.display())]
    FormatMissing(PathBuf),
    #[error("edge ({u}, {v}) on line {line} joins nodes of different graphs")]
    CrossGraphEdge { line: usize, u: usize, v: usize },
    #[error("{file}:{line}: {msg}")]
    ParseError { file: String, line: usize, msg: String },
    #[error("inconsistent dataset: {0}")]
    InvalidDataset(String),
    #[error("feature policy one_hot_labels requires node labels")]
    MissingNodeLabels,
    #[error("split with {valid} validation and {train} training graphs is degenerate")]
    DegenerateSplit { train: usize, valid: usize },
    #[error("cannot build {k} folds from {n} items")]
    TooManyFolds { k: usize, n: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("cosine similarity of a zero-norm vector")]
    ZeroNorm,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("contrastive loss needs at least 2 graphs per batch, got {0}")]
    InsufficientBatch(usize),
    #[error("exact hypergradient oracle limited to small instances: {0}")]
    OracleTooExpensive(String),
    #[error("could not build folds containing every class (k={k})")]
    StratificationFailed { k: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
