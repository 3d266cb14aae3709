//! Dense reverse-mode automatic differentiation in double precision.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_params, rel_error, relu_margin};
pub use optim::{sgd_step, Adam, Optimizer, OptimizerKind};
pub use params::{glorot, ParamSet};
pub use tape::{Bound, Tape, Var};
pub use tensor::Tensor;
