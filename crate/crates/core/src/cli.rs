//! The `gpa` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data, config or
//! runtime errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::encoder::EncoderParams;
use crate::error::{GpaError, Result};
use crate::eval::{
    augmentation_report, extract_embeddings, linear_probe_cv, probe_fixed_pairs, write_ablation_table, AblationRow,
    PairProbeConfig, ProbeResult,
};
use crate::graph::{parse_tudataset, split, GraphDataset};
use crate::trainer::{load_checkpoint, save_checkpoint, train, train_random_baseline, TrainerState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

const EMBED_BATCH: usize = 64;

#[derive(Debug, Parser)]
#[command(
    name = "gpa",
    version,
    about = "Contrastive graph learning with learned per-graph augmentation pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Overrides the training and probe seeds from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dataset statistics as JSON.
    Stats {
        dir: PathBuf,
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Bi-level training; writes a checkpoint and loss_history.csv.
    Train {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Linear probe on a checkpoint's embeddings; writes probe_result.json.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Per-graph pair scores and the pair histogram.
    ReportAug {
        checkpoint: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fixed-pair training grid with per-graph probe correctness.
    ProbePairs {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Learned selection vs. uniformly random pairs on the same split.
    AblateRandom {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let cfg = RunConfig::load(path)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn probe(dataset: &GraphDataset, enc: &EncoderParams, cfg: &RunConfig) -> Result<ProbeResult> {
    let (x, labels) = extract_embeddings(dataset, enc, EMBED_BATCH)?;
    linear_probe_cv(&x, &labels, cfg.probe.folds, cfg.probe.seed)
}

fn finished(state: &TrainerState) -> Result<()> {
    match &state.aborted {
        Some(msg) => Err(GpaError::NonFiniteGradient(format!("training aborted at {msg}"))),
        None => Ok(()),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Stats { dir, name, common } => {
            let t = std::time::Instant::now();
            let ds = parse_tudataset(&dir, &name)?;
            let stats = ds.stats();
            println!("{}", serde_json::to_string_pretty(&stats)?);
            log::info!("parsed {name} in {:?}", t.elapsed());
            std::fs::create_dir_all(&common.out)?;
            write_json(common.out.join("stats.json"), &stats)
        }
        Command::Train { config, common } => {
            let cfg = load_config(&config, common.seed)?;
            let ds = cfg.load_dataset()?;
            let sp = split(&ds, cfg.model.train.valid_fraction, cfg.model.train.seed)?;
            let model = cfg.model.for_dataset(&ds)?;
            let state = train(&ds, &sp, &model)?;
            std::fs::create_dir_all(&common.out)?;
            state.write_loss_history(common.out.join("loss_history.csv"))?;
            write_json(common.out.join("split.json"), &sp)?;
            save_checkpoint(&common.out, &state, &model)?;
            finished(&state)?;
            if let (Some(first), Some(last)) = (state.epoch_train_means().first(), state.epoch_train_means().last()) {
                println!(
                    "trained {} epochs: mean train loss {first:.4} -> {last:.4}",
                    state.epoch
                );
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            config,
            common,
        } => {
            let cfg = load_config(&config, common.seed)?;
            let (enc, _, _) = load_checkpoint(&checkpoint)?;
            let ds = cfg.load_dataset()?;
            let result = probe(&ds, &enc, &cfg)?;
            std::fs::create_dir_all(&common.out)?;
            write_json(common.out.join("probe_result.json"), &result)?;
            println!("accuracy {:.2} +- {:.2} %", 100.0 * result.mean, 100.0 * result.std);
            Ok(())
        }
        Command::ReportAug {
            checkpoint,
            config,
            common,
        } => {
            let cfg = load_config(&config, common.seed)?;
            let (enc, theta, meta) = load_checkpoint(&checkpoint)?;
            let ds = cfg.load_dataset()?;
            let mut model = cfg.model;
            model.encoder = enc.config;
            let report = augmentation_report(&ds, &enc, &theta, &model.view_context(meta.epoch))?;
            std::fs::create_dir_all(&common.out)?;
            report.write_csv(common.out.join("aug_report.csv"))?;
            report.write_histogram_csv(common.out.join("aug_histogram.csv"))?;
            for (pair, count) in crate::augment::all_pairs().iter().zip(report.histogram) {
                if count > 0 {
                    println!("{:>5}  {}", count, pair.name());
                }
            }
            Ok(())
        }
        Command::ProbePairs { config, common } => {
            let cfg = load_config(&config, common.seed)?;
            let ds = cfg.load_dataset()?;
            let probe_cfg = PairProbeConfig {
                repeats: cfg.probe_pairs.repeats.unwrap_or(1),
                folds: cfg.probe.folds,
                seed: cfg.probe.seed,
            };
            let grid = probe_fixed_pairs(&ds, &cfg.pairs(), &cfg.model, &probe_cfg)?;
            std::fs::create_dir_all(&common.out)?;
            grid.write_csv(common.out.join("pair_probe_grid.csv"))?;
            for (p, degenerate) in grid.pairs.iter().zip(&grid.degenerate) {
                if *degenerate {
                    eprintln!("note: {} uses identical views; its positive term is constant", p.name());
                }
            }
            Ok(())
        }
        Command::AblateRandom { config, common } => {
            let cfg = load_config(&config, common.seed)?;
            let ds = cfg.load_dataset()?;
            let sp = split(&ds, cfg.model.train.valid_fraction, cfg.model.train.seed)?;
            let model = cfg.model.for_dataset(&ds)?;
            std::fs::create_dir_all(&common.out)?;
            let mut rows = Vec::new();
            for (method, state) in [
                ("GPA", train(&ds, &sp, &model)?),
                ("GPA-random", train_random_baseline(&ds, &sp, &model)?),
            ] {
                finished(&state)?;
                let tag = method.to_lowercase().replace('-', "_");
                state.write_loss_history(common.out.join(format!("loss_history_{tag}.csv")))?;
                let result = probe(&ds, &state.encoder, &cfg)?;
                write_json(common.out.join(format!("probe_result_{tag}.json")), &result)?;
                rows.push(AblationRow {
                    method: method.to_string(),
                    result,
                });
            }
            let mut table = Vec::new();
            write_ablation_table(&rows, &mut table)?;
            std::fs::write(common.out.join("ablation.md"), &table)?;
            print!("{}", String::from_utf8_lossy(&table));
            Ok(())
        }
    }
}
