//! Dense tensors and reverse-mode automatic differentiation.

mod gemm;
mod gradcheck;
mod suite;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_with, GradCheckReport, Stencil, DEFAULT_EPS};
pub use suite::primitive_suite;
pub use tape::{Gradients, Tape, Var, PROB_FLOOR};
pub use tensor::Tensor;

pub(crate) use gemm::{gemm, Op as GemmOp};
