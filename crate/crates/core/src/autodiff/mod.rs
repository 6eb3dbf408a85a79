//! Dense tensors with reverse-mode automatic differentiation.

pub mod checkpoint;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, CoordinateCheck, GradCheckOptions, GradCheckReport};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{masked_softmax_rows, Backward, Tape, Var};
pub use tensor::Tensor;
