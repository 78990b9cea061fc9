//! Dense and sparse linear algebra, reverse-mode differentiation, Adam, and
//! a finite-difference gradient checker. Everything is `f64`.

mod adam;
mod gradcheck;
mod matrix;
mod sparse;
mod tape;

pub use adam::{Adam, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, FULL_CHECK_LIMIT};
pub use matrix::{dot, Matrix};
pub use sparse::CsrMatrix;
pub use tape::{softmax_in_place, SparseOperand, Tape, Var, NORM_EPSILON};
