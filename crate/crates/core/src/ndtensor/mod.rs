//! Dense row-major tensors and a reverse-mode autodiff tape.
//!
//! Tensors are plain values (`Tensor<F>`); differentiation happens by
//! recording operations on a [`Tape`] and replaying it backwards. The element
//! type defaults to `f32`; the same code runs in `f64` for gradient checks.

pub mod gradcheck;
mod io;
pub mod kernels;
mod real;
mod rng;
mod tape;
mod tensor;

pub use io::{read_ndt, read_ndt_from, write_ndt, write_ndt_to, Archive, NDT_MAGIC};
pub use real::{DType, Real};
pub use rng::{Stream, StreamId};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{checked_mode, set_checked_mode, Tensor};
