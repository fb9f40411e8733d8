//! Reverse-mode automatic differentiation over dense `f64` tensors, with a
//! gradient-reversal primitive, SGD/Adam updates and a finite-difference
//! gradient checker.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, check_loss_gradients, GradCheckConfig, GradCheckReport, ParamCheck};
pub use optim::{adam_step, sgd_step, OptimizerKind, OptimizerState};
pub use params::{Bindings, GradMap, ParamGroup, Parameter, ParameterSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
