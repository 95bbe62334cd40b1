//! Fully connected VAE with a tunable-variance Gaussian decoder.

mod loss;
mod model;
mod train;

pub use loss::{
    categorical_nll, gaussian_nll, gaussian_nll_on, kl_on, kl_to_standard_normal, reparameterize,
    reparameterize_on, reparameterize_with, CategoricalHead, GaussianPosterior, PosteriorVars,
};
pub use model::{ElboTerms, ElboVars, GaussianHead, VaeModel, GAMMA_MIN};
pub use train::{train_stage, train_stage_on, TrainConfig, TrainReport, TrainingData};
