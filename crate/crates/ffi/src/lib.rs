//! C ABI over `gpa-core`.
//!
//! Every function returns a [`GpaStatus`]; on failure the message is kept
//! per thread and read with [`gpa_last_error`]. Handles are opaque and must
//! be released with their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gpa_core::augment::NUM_PAIRS;
use gpa_core::config::RunConfig;
use gpa_core::encoder::EncoderParams;
use gpa_core::graph::{build_features, parse_tudataset, split, FeaturePolicy, GraphDataset};
use gpa_core::selector::{batch_scores, ScoringMode, SelectorParams};
use gpa_core::trainer::{load_checkpoint, save_checkpoint, train, GpaConfig};
use gpa_core::GpaError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Numeric = 6,
    Internal = 7,
}

impl From<&GpaError> for GpaStatus {
    fn from(e: &GpaError) -> Self {
        use GpaError::*;
        match e {
            FormatMissing(_)
            | CrossGraphEdge { .. }
            | ParseError { .. }
            | InvalidDataset(_)
            | MissingNodeLabels
            | Csv(_) => GpaStatus::Format,
            Io(_) => GpaStatus::Io,
            Config(_) | Json(_) | Checkpoint(_) | DegenerateSplit { .. } => GpaStatus::Config,
            ZeroNorm | NonFiniteGradient(_) => GpaStatus::Numeric,
            _ => GpaStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (GpaStatus, String)>) -> GpaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GpaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GpaStatus::Internal
        }
    }
}

fn core_err(e: GpaError) -> (GpaStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (GpaStatus, String) {
    (GpaStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (GpaStatus, String)> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn str_arg(p: *const c_char, what: &str) -> Result<String, (GpaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (GpaStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gpa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// A parsed dataset with one-hot node-label features.
pub struct GpaDataset(GraphDataset);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GpaDatasetStats {
    pub num_graphs: usize,
    pub avg_nodes: f64,
    pub avg_edges: f64,
    pub num_classes: usize,
    pub feature_dim: usize,
}

/// # Safety
/// `dir` and `name` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpa_dataset_load(
    dir: *const c_char,
    name: *const c_char,
    out: *mut *mut GpaDataset,
) -> GpaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = path_arg(dir, "dir")?;
        let name = str_arg(name, "name")?;
        let raw = parse_tudataset(dir, &name).map_err(core_err)?;
        let ds = build_features(&raw, FeaturePolicy::OneHotLabels).map_err(core_err)?;
        *out = Box::into_raw(Box::new(GpaDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`gpa_dataset_load`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpa_dataset_stats(ds: *const GpaDataset, out: *mut GpaDatasetStats) -> GpaStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = ds.0.stats();
        *out = GpaDatasetStats {
            num_graphs: s.num_graphs,
            avg_nodes: s.avg_nodes,
            avg_edges: s.avg_edges,
            num_classes: s.num_classes,
            feature_dim: ds.0.feature_dim,
        };
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`gpa_dataset_load`] or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn gpa_dataset_free(ds: *mut GpaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trained encoder and selector weights.
pub struct GpaModel {
    encoder: EncoderParams,
    selector: SelectorParams,
    cfg: GpaConfig,
    epoch: usize,
}

/// Loads the checkpoint directory written by training.
///
/// # Safety
/// `checkpoint_dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpa_model_load(checkpoint_dir: *const c_char, out: *mut *mut GpaModel) -> GpaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = path_arg(checkpoint_dir, "checkpoint_dir")?;
        let (encoder, selector, meta) = load_checkpoint(dir).map_err(core_err)?;
        *out = Box::into_raw(Box::new(GpaModel {
            encoder,
            selector,
            cfg: meta.cfg,
            epoch: meta.epoch,
        }));
        Ok(())
    })
}

/// Width of the embeddings written by [`gpa_model_embed`]; 0 for null.
///
/// # Safety
/// `model` must come from [`gpa_model_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn gpa_model_embedding_dim(model: *const GpaModel) -> usize {
    model.as_ref().map_or(0, |m| m.encoder.config.hidden_dim)
}

/// Writes `num_graphs * embedding_dim` pre-projection embeddings, row-major.
///
/// # Safety
/// Handles must be live; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gpa_model_embed(
    model: *const GpaModel,
    ds: *const GpaDataset,
    out: *mut f64,
    out_len: usize,
) -> GpaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let need = ds.0.len() * model.encoder.config.hidden_dim;
        if out_len < need {
            return Err((
                GpaStatus::InvalidArgument,
                format!("output holds {out_len} values, {need} needed"),
            ));
        }
        let refs: Vec<_> = ds.0.graphs.iter().collect();
        let z = model.encoder.embed(&refs, false).map_err(core_err)?;
        std::slice::from_raw_parts_mut(out, need).copy_from_slice(z.data());
        Ok(())
    })
}

/// Writes the 15 pair probabilities of one graph, in pair order.
///
/// # Safety
/// Handles must be live; `out` must hold 15 doubles.
#[no_mangle]
pub unsafe extern "C" fn gpa_model_pair_scores(
    model: *const GpaModel,
    ds: *const GpaDataset,
    graph_index: usize,
    out: *mut f64,
) -> GpaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let g = ds.0.graphs.get(graph_index).ok_or_else(|| {
            (
                GpaStatus::InvalidArgument,
                format!("graph {graph_index} of {}", ds.0.len()),
            )
        })?;
        let ctx = model.cfg.view_context(model.epoch);
        let scores = batch_scores(
            &[g],
            &[graph_index],
            &model.encoder,
            &model.selector,
            &ctx,
            ScoringMode::Cached,
        )
        .map_err(core_err)?;
        std::slice::from_raw_parts_mut(out, NUM_PAIRS).copy_from_slice(&scores[0].probs);
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`gpa_model_load`] or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn gpa_model_free(model: *mut GpaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trains from a JSON run config and writes a checkpoint to `out_dir`.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gpa_train_from_config(config_path: *const c_char, out_dir: *const c_char) -> GpaStatus {
    guard(|| {
        let cfg = RunConfig::load(path_arg(config_path, "config_path")?).map_err(core_err)?;
        let out_dir = path_arg(out_dir, "out_dir")?;
        let ds = cfg.load_dataset().map_err(core_err)?;
        let sp = split(&ds, cfg.model.train.valid_fraction, cfg.model.train.seed).map_err(core_err)?;
        let model = cfg.model.for_dataset(&ds).map_err(core_err)?;
        let state = train(&ds, &sp, &model).map_err(core_err)?;
        if let Some(msg) = &state.aborted {
            return Err((GpaStatus::Numeric, format!("training aborted at {msg}")));
        }
        save_checkpoint(&out_dir, &state, &model).map_err(core_err)?;
        state
            .write_loss_history(out_dir.join("loss_history.csv"))
            .map_err(core_err)
    })
}
