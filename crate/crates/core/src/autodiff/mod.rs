//! Reverse-mode automatic differentiation over small dense tensors.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, global_norm, Adam, AdamConfig, StepOutcome};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use tape::{sigmoid, softplus, softplus_inverse, Gradients, Tape, Var, DEFAULT_LEAKY_SLOPE, EIGEN_GAP_CLAMP};
pub use tensor::{Tensor, MAX_RANK};
