//! One-step bi-level optimization: the finite-difference hypergradient for
//! the selector weights and an exact (numerically differentiated) oracle.

use std::cell::OnceCell;

use crate::augment::AugPair;
use crate::autodiff::{sgd_step, Optimizer, ParamSet, Tape};
use crate::encoder::EncoderConfig;
use crate::error::{GpaError, Result};
use crate::graph::Graph;
use crate::selector::ViewContext;

use super::loss::{hard_loss_on_tape, soft_loss_from_views, SoftViews};

/// The three gradient oracles the bi-level update needs.
pub trait BilevelObjective {
    /// Lower-level training loss and its `w`-gradient.
    fn lower_grad(&self, w: &ParamSet, theta: &ParamSet) -> Result<(f64, ParamSet)>;

    /// Upper-level (validation) loss with its `w`- and `theta`-gradients.
    fn upper_grads(&self, w: &ParamSet, theta: &ParamSet) -> Result<(f64, ParamSet, ParamSet)>;

    /// `w`- and `theta`-gradients of the `theta`-dependent training loss.
    fn coupling_grads(&self, w: &ParamSet, theta: &ParamSet) -> Result<(ParamSet, ParamSet)>;

    /// Refuses instances too large for [`hypergradient_oracle`].
    fn oracle_budget(&self, _theta: &ParamSet) -> Result<()> {
        Ok(())
    }
}

/// `L_train = (w - theta)^2 / 2`, `L_valid = w^2 / 2` on one-element sets
/// named `w` and `theta`. With `coupled == false` the training loss is
/// `w^2 / 2` and does not involve `theta`.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticStub {
    pub coupled: bool,
}

impl QuadraticStub {
    pub fn params(w: f64, theta: f64) -> (ParamSet, ParamSet) {
        let one = |name: &str, v: f64| {
            let mut p = ParamSet::new();
            p.insert(name, crate::autodiff::Tensor::vector(vec![v]));
            p
        };
        (one("w", w), one("theta", theta))
    }

    fn scalars(w: &ParamSet, theta: &ParamSet) -> Result<(f64, f64)> {
        let get = |p: &ParamSet, n: &str| {
            p.get(n)
                .map(|t| t.data()[0])
                .ok_or_else(|| GpaError::Shape(format!("stub parameter `{n}` missing")))
        };
        Ok((get(w, "w")?, get(theta, "theta")?))
    }

    fn train_residual(&self, w: f64, th: f64) -> f64 {
        if self.coupled {
            w - th
        } else {
            w
        }
    }
}

impl BilevelObjective for QuadraticStub {
    fn lower_grad(&self, w: &ParamSet, theta: &ParamSet) -> Result<(f64, ParamSet)> {
        let (wv, th) = Self::scalars(w, theta)?;
        let r = self.train_residual(wv, th);
        Ok((0.5 * r * r, Self::params(r, 0.0).0))
    }

    fn upper_grads(&self, w: &ParamSet, theta: &ParamSet) -> Result<(f64, ParamSet, ParamSet)> {
        let (wv, _) = Self::scalars(w, theta)?;
        let (gw, gt) = Self::params(wv, 0.0);
        Ok((0.5 * wv * wv, gw, gt))
    }

    fn coupling_grads(&self, w: &ParamSet, theta: &ParamSet) -> Result<(ParamSet, ParamSet)> {
        let (wv, th) = Self::scalars(w, theta)?;
        let r = self.train_residual(wv, th);
        let dtheta = if self.coupled { -r } else { 0.0 };
        Ok(Self::params(r, dtheta))
    }
}

/// Splits gradients of a merged `w`/`theta` binding back into the two sets.
fn split_grads(all: &ParamSet, w: &ParamSet, theta: &ParamSet) -> (ParamSet, ParamSet) {
    let pick = |like: &ParamSet| {
        let mut out = ParamSet::new();
        for name in like.names() {
            out.insert(name.clone(), all.get(name).expect("bound parameter").clone());
        }
        out
    };
    (pick(w), pick(theta))
}

/// The real objective on one train minibatch (with its pre-selected hard
/// pairs) and one validation minibatch.
#[derive(Clone, Debug)]
pub struct GpaObjective<'a> {
    pub train: Vec<&'a Graph>,
    pub train_ids: Vec<usize>,
    pub train_pairs: Vec<AugPair>,
    pub valid: Vec<&'a Graph>,
    pub valid_ids: Vec<usize>,
    pub ctx: ViewContext,
    pub encoder: EncoderConfig,
    pub tau: f64,
    // views depend only on the batches and `ctx`, never on parameters
    train_views: OnceCell<SoftViews>,
    valid_views: OnceCell<SoftViews>,
}

impl<'a> GpaObjective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        train: Vec<&'a Graph>,
        train_ids: Vec<usize>,
        train_pairs: Vec<AugPair>,
        valid: Vec<&'a Graph>,
        valid_ids: Vec<usize>,
        ctx: ViewContext,
        encoder: EncoderConfig,
        tau: f64,
    ) -> Self {
        Self {
            train,
            train_ids,
            train_pairs,
            valid,
            valid_ids,
            ctx,
            encoder,
            tau,
            train_views: OnceCell::new(),
            valid_views: OnceCell::new(),
        }
    }

    fn views<'c>(&self, cell: &'c OnceCell<SoftViews>, graphs: &[&Graph], ids: &[usize]) -> Result<&'c SoftViews> {
        if let Some(v) = cell.get() {
            return Ok(v);
        }
        let built = SoftViews::new(graphs, ids, &self.ctx)?;
        Ok(cell.get_or_init(|| built))
    }

    fn soft_grads(&self, views: &SoftViews, w: &ParamSet, theta: &ParamSet) -> Result<(f64, ParamSet, ParamSet)> {
        let mut tape = Tape::new();
        let mut bound = tape.bind(w);
        let th = tape.bind(theta);
        let loss = soft_loss_from_views(&mut tape, views, &bound, &self.encoder, &th, self.tau)?;
        let value = tape.value(loss).item();
        bound.extend(th);
        let all = tape.backward(loss, &bound)?;
        let (gw, gt) = split_grads(&all, w, theta);
        Ok((value, gw, gt))
    }
}

pub const ORACLE_MAX_GRAPHS: usize = 10;
pub const ORACLE_MAX_HIDDEN: usize = 16;

impl BilevelObjective for GpaObjective<'_> {
    fn lower_grad(&self, w: &ParamSet, _theta: &ParamSet) -> Result<(f64, ParamSet)> {
        let mut tape = Tape::new();
        let bound = tape.bind(w);
        let loss = hard_loss_on_tape(
            &mut tape,
            &self.train,
            &self.train_ids,
            &self.train_pairs,
            &self.ctx,
            &bound,
            &self.encoder,
            self.tau,
        )?;
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss, &bound)?))
    }

    fn upper_grads(&self, w: &ParamSet, theta: &ParamSet) -> Result<(f64, ParamSet, ParamSet)> {
        let views = self.views(&self.valid_views, &self.valid, &self.valid_ids)?;
        self.soft_grads(views, w, theta)
    }

    fn coupling_grads(&self, w: &ParamSet, theta: &ParamSet) -> Result<(ParamSet, ParamSet)> {
        let views = self.views(&self.train_views, &self.train, &self.train_ids)?;
        let (_, gw, gt) = self.soft_grads(views, w, theta)?;
        Ok((gw, gt))
    }

    fn oracle_budget(&self, theta: &ParamSet) -> Result<()> {
        let graphs = self.train.len().max(self.valid.len());
        let score_hidden = theta.get("score.b1").map_or(0, |t| t.len());
        if graphs > ORACLE_MAX_GRAPHS || self.encoder.hidden_dim > ORACLE_MAX_HIDDEN || score_hidden > ORACLE_MAX_HIDDEN
        {
            return Err(GpaError::OracleTooExpensive(format!(
                "{graphs} graphs, encoder hidden {}, score hidden {score_hidden} (limits {ORACLE_MAX_GRAPHS} / {ORACLE_MAX_HIDDEN})",
                self.encoder.hidden_dim
            )));
        }
        Ok(())
    }
}

/// Hypergradient estimate and the quantities logged alongside it.
#[derive(Clone, Debug)]
pub struct Hypergradient {
    pub grad: ParamSet,
    /// Validation loss at the virtual step `w'`.
    pub valid_loss: f64,
    pub v_norm: f64,
    pub correction_skipped: bool,
}

/// Virtual plain-SGD step `w' = w - xi * grad_w L_train(w, theta)`.
fn virtual_step(obj: &dyn BilevelObjective, w: &ParamSet, theta: &ParamSet, xi: f64) -> Result<ParamSet> {
    let (_, g) = obj.lower_grad(w, theta)?;
    let mut w_prime = w.clone();
    sgd_step(&mut w_prime, &g, xi)?;
    Ok(w_prime)
}

/// Finite-difference hypergradient:
///
/// ```text
/// grad_theta L_valid(w', theta)
///   - xi * [grad_theta L_train(w+, theta) - grad_theta L_train(w-, theta)] / (2 eps)
/// ```
///
/// with `v = grad_w' L_valid(w', theta)`, `w+- = w +- eps v` and
/// `eps = eps_scale / |v|`.
pub fn hypergradient(
    obj: &dyn BilevelObjective,
    w: &ParamSet,
    theta: &ParamSet,
    xi: f64,
    eps_scale: f64,
) -> Result<Hypergradient> {
    let w_prime = virtual_step(obj, w, theta, xi)?;
    let (valid_loss, v, direct) = obj.upper_grads(&w_prime, theta)?;
    let v_norm = v.norm();
    if v_norm < 1e-12 {
        log::debug!("validation gradient norm {v_norm:e}; skipping the second-order term");
        return Ok(Hypergradient {
            grad: direct,
            valid_loss,
            v_norm,
            correction_skipped: true,
        });
    }
    let eps = eps_scale / v_norm;
    let mut w_plus = w.clone();
    w_plus.axpy(eps, &v)?;
    let mut w_minus = w.clone();
    w_minus.axpy(-eps, &v)?;
    let (_, g_plus) = obj.coupling_grads(&w_plus, theta)?;
    let (_, g_minus) = obj.coupling_grads(&w_minus, theta)?;
    let mut grad = direct;
    grad.axpy(-xi / (2.0 * eps), &g_plus)?;
    grad.axpy(xi / (2.0 * eps), &g_minus)?;
    Ok(Hypergradient {
        grad,
        valid_loss,
        v_norm,
        correction_skipped: false,
    })
}

/// Reference hypergradient: the mixed second derivative is taken by central
/// differences of `grad_w L_train` over each `theta` coordinate (step `h`),
/// instead of differences over `w`. Only for small instances.
pub fn hypergradient_oracle(
    obj: &dyn BilevelObjective,
    w: &ParamSet,
    theta: &ParamSet,
    xi: f64,
    h: f64,
) -> Result<ParamSet> {
    obj.oracle_budget(theta)?;
    let w_prime = virtual_step(obj, w, theta, xi)?;
    let (_, v, mut out) = obj.upper_grads(&w_prime, theta)?;
    for k in 0..theta.num_values() {
        let mut plus = theta.clone();
        *plus.value_mut(k) += h;
        let mut minus = theta.clone();
        *minus.value_mut(k) -= h;
        let (gw_plus, _) = obj.coupling_grads(w, &plus)?;
        let (gw_minus, _) = obj.coupling_grads(w, &minus)?;
        let jv = (gw_plus.dot(&v)? - gw_minus.dot(&v)?) / (2.0 * h);
        *out.value_mut(k) -= xi * jv;
    }
    Ok(out)
}

/// One optimizer step on `w` from the lower-level gradient; `theta` is
/// untouched. Returns the training loss before the step.
pub fn lower_step(obj: &dyn BilevelObjective, w: &mut ParamSet, theta: &ParamSet, opt: &mut Optimizer) -> Result<f64> {
    let (loss, g) = obj.lower_grad(w, theta)?;
    opt.step(w, &g)?;
    Ok(loss)
}

/// One optimizer step on `theta` along the hypergradient; `w` is untouched.
pub fn upper_step(
    obj: &dyn BilevelObjective,
    w: &ParamSet,
    theta: &mut ParamSet,
    xi: f64,
    eps_scale: f64,
    opt: &mut Optimizer,
) -> Result<Hypergradient> {
    let hg = hypergradient(obj, w, theta, xi, eps_scale)?;
    opt.step(theta, &hg.grad)?;
    Ok(hg)
}
