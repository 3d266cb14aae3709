//! Contrastive objectives, the bi-level optimizer and the training loops.

mod bilevel;
mod loss;
mod train;

pub use bilevel::{
    hypergradient, hypergradient_oracle, lower_step, upper_step, BilevelObjective, GpaObjective, Hypergradient,
    QuadraticStub, ORACLE_MAX_GRAPHS, ORACLE_MAX_HIDDEN,
};
pub use loss::{
    hard_loss_on_tape, hard_train_loss, ntxent_loss, ntxent_per_graph, ntxent_value, pair_batch,
    pair_losses_from_batch, pair_losses_on_tape, soft_loss_from_views, soft_loss_on_tape, soft_loss_with_weights,
    soft_weighted_loss, SoftViews,
};
pub use train::{
    load_checkpoint, random_pair, save_checkpoint, train, train_fixed_pair, train_random_baseline, CheckpointMeta,
    GpaConfig, LossRecord, TrainConfig, TrainerState, META_FILE, RANDOM_PAIR_SLOT, THETA_FILE, W_FILE,
};
