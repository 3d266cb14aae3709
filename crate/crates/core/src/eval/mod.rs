//! Linear-probe evaluation and the report generators.

mod probe;
mod reports;

pub use crate::trainer::train_random_baseline;
pub use probe::{
    extract_embeddings, linear_probe_cv, probe_with_predictions, stratified_folds, LogisticModel, ProbeOutcome,
    ProbeResult, ITERATIONS, L2, LEARNING_RATE,
};
pub use reports::{
    augmentation_report, probe_fixed_pairs, write_ablation_table, AblationRow, AugReport, PairProbeConfig,
    PairProbeGrid,
};
