//! Dense `f64` tensors, a reverse-mode tape, Adam, and a flat checkpoint
//! format.

mod adam;
pub mod checkpoint;
mod error;
pub mod gradcheck;
mod params;
pub mod suite;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{AutodiffError, Result};
pub use params::{ParamId, ParamStore};
pub use tape::{DropoutKey, Gradients, Tape, Var, COSINE_EPS};
pub use tensor::Tensor;
