//! Dense-matrix substrate: the matrix type, elementary differentiable
//! functions, a reverse-mode tape, the AdamW optimizer and the
//! finite-difference gradient checker.

mod gradcheck;
pub mod linalg;
mod matrix;
mod optim;
mod scalar;
pub mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use matrix::{cosine_rows, dot, kl_divergence, softmax_row, Mat, KL_FLOOR};
pub use optim::{AdamW, AdamWConfig};
pub use scalar::Real;
pub use tape::{Grads, Tape, Var};

#[allow(unused_imports)]
pub(crate) use tape::{focal_term, focal_term_grad, log_sigmoid, sigmoid};
