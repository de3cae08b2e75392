//! Dense matrices, reverse-mode gradients, Adam and gradient checking.

pub mod gradcheck;
pub mod matrix;
pub mod optim;
pub mod tape;

pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, GradCheckReport};
pub use matrix::{spmm, DenseMatrix};
pub use optim::{adam_step, Adam, ParamId, ParamStore, Parameter};
pub use tape::{Biterms, Gradients, Tape, Var, PROB_FLOOR};
