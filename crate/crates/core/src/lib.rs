//! Graph contrastive learning with per-graph learned augmentation selection.
//!
//! The crate is split along the pipeline:
//!
//! - [`graph`]: graph/dataset model, TU-format I/O, features, splits and stats.
//! - [`autodiff`]: a small dense reverse-mode tape in double precision.
//! - [`augment`]: the five augmentation operators and the 15 augmentation pairs.
//! - [`encoder`]: GIN encoder, sum readout and projection head.
//! - [`selector`]: the pair score network and argmax selection.
//! - [`trainer`]: contrastive loss, bi-level optimizer and training loops.
//! - [`eval`]: linear probe, reports, fixed-pair probing and the random ablation.
//! - [`cli`]: the `gpa` command line.

pub mod augment;
pub mod autodiff;
pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod selector;
pub mod trainer;

pub use error::{GpaError, Result};
