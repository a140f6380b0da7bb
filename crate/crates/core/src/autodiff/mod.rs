//! Reverse-mode automatic differentiation over dense `f64` matrices.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, TensorCheck};
pub use tape::{SparseRows, Tape, Var};
#[allow(unused_imports)]
pub(crate) use tape::{log_sigmoid, sigmoid};
pub use tensor::Tensor;
