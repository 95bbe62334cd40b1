//! Tensors, reverse-mode differentiation, Adam and seeded sampling.

mod adam;
mod gradcheck;
mod rng;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{check_gradients, GradCheck};
pub use rng::{sample_standard_normal, Rng};
pub(crate) use tape::sigmoid;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
