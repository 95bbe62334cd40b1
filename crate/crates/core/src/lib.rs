//! Cascaded variational autoencoders with tunable decoder variance.
//!
//! A stage-1 VAE is fit to the data; each later stage is a VAE fit to the
//! latent codes of the stage before it, with latent size equal to its input
//! size. Sampling draws `z ~ N(0, I)` at the deepest stage and decodes down the
//! chain. The crate also ships the synthetic sphere experiment, a SMILES
//! subset parser with simple descriptors, a GRU sequence VAE, and
//! distribution-learning metrics (validity, uniqueness, novelty, 1-D
//! Wasserstein distances).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which every experiment uses.

pub mod cascade;
pub mod checkpoint;
pub mod error;
pub mod manifold;
pub mod metrics;
pub mod nn;
pub mod numcore;
pub mod scalar;
pub mod seqvae;
pub mod smiles;
pub mod vae;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = numcore::Tensor<f64>;
pub type Tape = numcore::Tape<f64>;
pub type AdamState = numcore::AdamState<f64>;
pub type VaeModel = vae::VaeModel<f64>;
pub type GaussianPosterior = vae::GaussianPosterior<f64>;
pub type SeqVaeModel = seqvae::SeqVaeModel<f64>;
pub type Cascade = cascade::Cascade<f64>;
pub type LatentDataset = cascade::LatentDataset<f64>;

pub use numcore::Rng;
