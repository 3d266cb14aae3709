use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{GpaError, Result};

fn check_finite(grads: &ParamSet) -> Result<()> {
    match grads.first_non_finite() {
        Some(name) => Err(GpaError::NonFiniteGradient(name.to_owned())),
        None => Ok(()),
    }
}

/// `params -= lr * grads`. Nothing is modified when a gradient is non-finite.
pub fn sgd_step(params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<()> {
    check_finite(grads)?;
    params.axpy(-lr, grads)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Option<ParamSet>,
    v: Option<ParamSet>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: None,
            v: None,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        check_finite(grads)?;
        let m = self.m.get_or_insert_with(|| params.zeros_like());
        let v = self.v.get_or_insert_with(|| params.zeros_like());
        // validates names and shapes before anything is touched
        m.dot(grads)?;
        params.dot(grads)?;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).unwrap().data();
            let m = m.get_mut(name).unwrap().data_mut();
            let v = v.get_mut(name).unwrap().data_mut();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data_mut()[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Either plain gradient descent or Adam with its running state.
#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::Sgd { lr },
            OptimizerKind::Adam => Self::Adam(Adam::new(lr)),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        match self {
            Self::Sgd { lr } => sgd_step(params, grads, *lr),
            Self::Adam(adam) => adam.step(params, grads),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn single(name: &str, v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::scalar(v));
        p
    }

    #[test]
    fn sgd_update() {
        let mut w = single("w", 1.0);
        sgd_step(&mut w, &single("w", 0.5), 0.1).unwrap();
        assert_eq!(w.get("w").unwrap().item(), 0.95);
        sgd_step(&mut w, &single("w", 0.0), 0.1).unwrap();
        assert_eq!(w.get("w").unwrap().item(), 0.95);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut w = single("w", 1.0);
        let err = sgd_step(&mut w, &single("w", f64::NAN), 0.1).unwrap_err();
        assert!(matches!(err, GpaError::NonFiniteGradient(n) if n == "w"));
        assert_eq!(w.get("w").unwrap().item(), 1.0);
        let mut adam = Adam::new(0.1);
        assert!(adam.step(&mut w, &single("w", f64::INFINITY)).is_err());
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn adam_first_step() {
        // m_hat = 1, v_hat = 1 at t = 1, so the step is lr / (1 + eps)
        let mut w = single("w", 1.0);
        let mut adam = Adam::new(0.1);
        adam.step(&mut w, &single("w", 1.0)).unwrap();
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((w.get("w").unwrap().item() - expected).abs() < 1e-15);
    }

    #[test]
    fn mismatched_names() {
        let mut w = single("w", 1.0);
        assert!(sgd_step(&mut w, &single("v", 1.0), 0.1).is_err());
        let mut adam = Adam::new(0.1);
        assert!(adam.step(&mut w, &single("v", 1.0)).is_err());
    }
}
