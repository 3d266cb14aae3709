use std::path::Path;

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{all_pairs, AugConfig, AugPair, NUM_PAIRS};
use crate::autodiff::{Optimizer, OptimizerKind, ParamSet};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{GpaError, Result};
use crate::graph::{GraphDataset, SplitSpec};
use crate::selector::{batch_scores, ScoringMode, SelectorConfig, SelectorParams, ViewContext};

use super::bilevel::{lower_step, upper_step, GpaObjective};

/// Stream slot used to draw the random-baseline pair of a graph.
pub const RANDOM_PAIR_SLOT: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Encoder learning rate; also the step of the virtual update `w'`.
    pub lr_w: f64,
    pub lr_theta: f64,
    pub tau: f64,
    pub epochs: usize,
    pub eps_scale: f64,
    pub seed: u64,
    pub valid_fraction: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            lr_w: 1e-3,
            lr_theta: 1e-3,
            tau: 0.2,
            epochs: 20,
            eps_scale: 0.01,
            seed: 0,
            valid_fraction: 0.1,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GpaError::Config(msg));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if [self.lr_w, self.lr_theta].iter().any(|lr| lr.is_nan() || *lr <= 0.0) {
            return bad(format!(
                "learning rates must be positive, got {} / {}",
                self.lr_w, self.lr_theta
            ));
        }
        if self.eps_scale.is_nan() || self.eps_scale <= 0.0 {
            return bad(format!("eps_scale must be positive, got {}", self.eps_scale));
        }
        Ok(())
    }
}

/// Everything a training run needs besides the data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpaConfig {
    pub encoder: EncoderConfig,
    pub selector: SelectorConfig,
    pub augment: AugConfig,
    pub train: TrainConfig,
}

impl GpaConfig {
    /// Copy with the encoder input width taken from `dataset` when unset.
    pub fn for_dataset(&self, dataset: &GraphDataset) -> Result<Self> {
        let mut cfg = *self;
        if cfg.encoder.feature_dim == 0 {
            cfg.encoder.feature_dim = dataset.feature_dim;
        } else if cfg.encoder.feature_dim != dataset.feature_dim {
            return Err(GpaError::Config(format!(
                "encoder feature_dim {} but dataset features have width {}",
                cfg.encoder.feature_dim, dataset.feature_dim
            )));
        }
        cfg.encoder.validate()?;
        cfg.augment.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn view_context(&self, epoch: usize) -> ViewContext {
        ViewContext {
            seed: self.train.seed,
            epoch: epoch as u64,
            aug: self.augment,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub theta_grad_norm: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainerState {
    pub encoder: EncoderParams,
    pub selector: SelectorParams,
    pub opt_w: Optimizer,
    pub opt_theta: Optimizer,
    /// Completed epochs.
    pub epoch: usize,
    pub loss_history: Vec<LossRecord>,
    /// Set when a step failed; training stopped there.
    pub aborted: Option<String>,
}

impl TrainerState {
    pub fn init(cfg: &GpaConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let encoder = EncoderParams::init(cfg.encoder, &mut rng)?;
        let selector = SelectorParams::init(cfg.encoder.hidden_dim, cfg.selector.hidden_dim, &mut rng);
        Ok(Self {
            encoder,
            selector,
            opt_w: Optimizer::new(cfg.train.optimizer, cfg.train.lr_w),
            opt_theta: Optimizer::new(cfg.train.optimizer, cfg.train.lr_theta),
            epoch: 0,
            loss_history: Vec::new(),
            aborted: None,
        })
    }

    /// Mean training loss of each epoch, in order.
    pub fn epoch_train_means(&self) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for r in &self.loss_history {
            if out.len() <= r.epoch {
                out.resize(r.epoch + 1, (0.0, 0));
            }
            out[r.epoch].0 += r.train_loss;
            out[r.epoch].1 += 1;
        }
        out.into_iter()
            .filter(|&(_, c)| c > 0)
            .map(|(s, c)| s / c as f64)
            .collect()
    }

    pub fn write_loss_history(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.loss_history {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        for p in [&self.encoder.params, &self.selector.params] {
            if let Some(name) = p.first_non_finite() {
                return Err(GpaError::NonFiniteGradient(format!(
                    "parameter `{name}` became non-finite"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PairMode {
    Learned,
    Random,
    Fixed(AugPair),
}

/// Bi-level training: per minibatch, infer pairs, step `w`, then step `theta`
/// along the hypergradient on a validation minibatch.
pub fn train(dataset: &GraphDataset, split: &SplitSpec, cfg: &GpaConfig) -> Result<TrainerState> {
    run(
        dataset,
        &split.train_indices,
        &split.valid_indices,
        cfg,
        PairMode::Learned,
    )
}

/// Ablation: a uniformly random pair per graph per epoch, lower level only.
pub fn train_random_baseline(dataset: &GraphDataset, split: &SplitSpec, cfg: &GpaConfig) -> Result<TrainerState> {
    run(dataset, &split.train_indices, &[], cfg, PairMode::Random)
}

/// Plain contrastive training with one pair for every graph.
pub fn train_fixed_pair(
    dataset: &GraphDataset,
    indices: &[usize],
    pair: AugPair,
    cfg: &GpaConfig,
) -> Result<TrainerState> {
    run(dataset, indices, &[], cfg, PairMode::Fixed(pair))
}

/// Pair of the random baseline for one graph and epoch.
pub fn random_pair(seed: u64, graph_id: usize, epoch: usize) -> AugPair {
    let mut rng = crate::augment::RngStream::new(seed, graph_id as u64, epoch as u64, RANDOM_PAIR_SLOT);
    all_pairs()[rng.gen_range(0..NUM_PAIRS)]
}

fn run(
    dataset: &GraphDataset,
    train_idx: &[usize],
    valid_idx: &[usize],
    cfg: &GpaConfig,
    mode: PairMode,
) -> Result<TrainerState> {
    let cfg = cfg.for_dataset(dataset)?;
    let tc = cfg.train;
    if train_idx.len() < 2 {
        return Err(GpaError::InsufficientBatch(train_idx.len()));
    }
    if mode == PairMode::Learned && valid_idx.len() < 2 {
        return Err(GpaError::InsufficientBatch(valid_idx.len()));
    }
    let mut state = TrainerState::init(&cfg)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(crate::augment::hash64(tc.seed, u64::MAX, 0, 0));
    let mut order = train_idx.to_vec();
    let mut step = 0;

    for epoch in 0..tc.epochs {
        let ctx = cfg.view_context(epoch);
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(tc.batch_size) {
            // a lone leftover graph has no negatives
            if chunk.len() < 2 {
                continue;
            }
            let valid: Vec<usize> = if mode == PairMode::Learned {
                let n = tc.batch_size.min(valid_idx.len());
                let mut picked: Vec<usize> = sample(&mut order_rng, valid_idx.len(), n)
                    .into_iter()
                    .map(|i| valid_idx[i])
                    .collect();
                picked.sort_unstable();
                picked
            } else {
                Vec::new()
            };
            let result = train_step(dataset, chunk, &valid, &cfg, &ctx, mode, &mut state);
            match result.and_then(|rec| state.check_finite().map(|_| rec)) {
                Ok((train_loss, valid_loss, theta_grad_norm)) => state.loss_history.push(LossRecord {
                    epoch,
                    step,
                    train_loss,
                    valid_loss,
                    theta_grad_norm,
                }),
                Err(e) => {
                    log::error!("training aborted at epoch {epoch}, step {step}: {e}");
                    state.aborted = Some(format!("epoch {epoch}, step {step}: {e}"));
                    return Ok(state);
                }
            }
            step += 1;
        }
        state.epoch = epoch + 1;
        if let Some(mean) = state.epoch_train_means().last() {
            log::info!("epoch {epoch}: mean train loss {mean:.6}");
        }
    }
    Ok(state)
}

type StepRecord = (f64, Option<f64>, Option<f64>);

fn train_step(
    dataset: &GraphDataset,
    batch: &[usize],
    valid: &[usize],
    cfg: &GpaConfig,
    ctx: &ViewContext,
    mode: PairMode,
    state: &mut TrainerState,
) -> Result<StepRecord> {
    let graphs: Vec<_> = batch.iter().map(|&i| &dataset.graphs[i]).collect();
    let pairs: Vec<AugPair> = match mode {
        PairMode::Learned => batch_scores(
            &graphs,
            batch,
            &state.encoder,
            &state.selector,
            ctx,
            ScoringMode::Cached,
        )?
        .iter()
        .map(|s| s.argmax())
        .collect(),
        PairMode::Random => batch
            .iter()
            .map(|&id| random_pair(cfg.train.seed, id, ctx.epoch as usize))
            .collect(),
        PairMode::Fixed(p) => vec![p; batch.len()],
    };
    let obj = GpaObjective::new(
        graphs,
        batch.to_vec(),
        pairs,
        valid.iter().map(|&i| &dataset.graphs[i]).collect(),
        valid.to_vec(),
        *ctx,
        cfg.encoder,
        cfg.train.tau,
    );
    let train_loss = lower_step(
        &obj,
        &mut state.encoder.params,
        &state.selector.params,
        &mut state.opt_w,
    )?;
    if mode != PairMode::Learned {
        return Ok((train_loss, None, None));
    }
    let hg = upper_step(
        &obj,
        &state.encoder.params,
        &mut state.selector.params,
        cfg.train.lr_w,
        cfg.train.eps_scale,
        &mut state.opt_theta,
    )?;
    Ok((train_loss, Some(hg.valid_loss), Some(hg.grad.norm())))
}

/// Sidecar written next to the parameter files of a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub cfg: GpaConfig,
    pub rng_seed: u64,
}

pub const W_FILE: &str = "w.bin";
pub const THETA_FILE: &str = "theta.bin";
pub const META_FILE: &str = "checkpoint.json";

/// Writes `w.bin`, `theta.bin` and `checkpoint.json` into `dir`.
pub fn save_checkpoint(dir: impl AsRef<Path>, state: &TrainerState, cfg: &GpaConfig) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    state.encoder.params.save(dir.join(W_FILE))?;
    state.selector.params.save(dir.join(THETA_FILE))?;
    let meta = CheckpointMeta {
        epoch: state.epoch,
        cfg: GpaConfig {
            encoder: state.encoder.config,
            ..*cfg
        },
        rng_seed: cfg.train.seed,
    };
    std::fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(EncoderParams, SelectorParams, CheckpointMeta)> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| GpaError::Checkpoint(format!("{}: {e}", meta_path.display())))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    let w = ParamSet::load(dir.join(W_FILE))?;
    let theta = ParamSet::load(dir.join(THETA_FILE))?;
    let mut probe = ChaCha8Rng::seed_from_u64(0);
    let expected = EncoderParams::init(meta.cfg.encoder, &mut probe)?;
    for (name, t) in expected.params.iter() {
        match w.get(name) {
            Some(got) if got.shape() == t.shape() => {}
            _ => {
                return Err(GpaError::Checkpoint(format!(
                    "encoder parameter `{name}` missing or misshapen"
                )))
            }
        }
    }
    let selector = SelectorParams { params: theta };
    if selector.embed_dim() != Some(meta.cfg.encoder.hidden_dim) {
        return Err(GpaError::Checkpoint("selector width does not match the encoder".into()));
    }
    Ok((
        EncoderParams {
            config: meta.cfg.encoder,
            params: w,
        },
        selector,
        meta,
    ))
}
