//! Complex dense tensors, GEMM-backed kernels and reverse-mode autodiff.

mod gradcheck;
mod linalg;
mod ops;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_sampled, LossFn};
pub use linalg::{apply_along_axis, cmatmul, matmul, modulus, sum_axis, sum_axis_complex};
pub use tape::{Backward, BackwardCtx, Gradients, Tape, Value, Var};
pub use tensor::{ComplexTensor, Tensor};

pub(crate) use linalg::{gemm, View};
