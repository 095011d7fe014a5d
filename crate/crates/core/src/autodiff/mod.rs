//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records every operation as it is evaluated. [`Tape::backward`]
//! then sweeps the records in reverse and returns [`Gradients`] for every
//! node that needs one.

mod conv;
pub mod gradcheck;
mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
