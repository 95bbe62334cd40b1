use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameterized;
use crate::numcore::{AdamConfig, AdamState, Rng, Tape, Tensor};
use crate::scalar::Scalar;
use crate::vae::loss::{reparameterize, GaussianPosterior};
use crate::vae::model::VaeModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// KL coefficient.
    pub beta: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 100,
            beta: 1.0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean minibatch loss of each epoch.
    pub loss_trace: Vec<f64>,
    /// Decoder variance after training (Gaussian heads only).
    pub final_gamma: Option<f64>,
}

/// Rows seen by a Gaussian stage during training.
#[derive(Clone, Copy, Debug)]
pub enum TrainingData<'a, T> {
    Fixed(&'a Tensor<T>),
    /// A fresh posterior sample per row at the start of every epoch.
    Resampled(&'a GaussianPosterior<T>),
}

impl<'a, T: Scalar> TrainingData<'a, T> {
    fn rows(&self) -> Result<usize> {
        match self {
            TrainingData::Fixed(t) => Ok(t.dims2()?.0),
            TrainingData::Resampled(p) => Ok(p.mu.dims2()?.0),
        }
    }

    fn epoch_view(&self, rng: &mut Rng) -> Cow<'a, Tensor<T>> {
        match *self {
            TrainingData::Fixed(t) => Cow::Borrowed(t),
            TrainingData::Resampled(p) => Cow::Owned(reparameterize(p, rng)),
        }
    }
}

/// Minibatch Adam on the negative ELBO of `data`.
pub fn train_stage<T: Scalar>(
    model: &mut VaeModel<T>,
    data: &Tensor<T>,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainReport> {
    train_stage_on(model, TrainingData::Fixed(data), config, rng)
}

pub fn train_stage_on<T: Scalar>(
    model: &mut VaeModel<T>,
    data: TrainingData<'_, T>,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainReport> {
    let n = data.rows()?;
    if n == 0 {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let beta = T::lit(config.beta);
    let mut adam = AdamState::new(config.adam);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let rows = data.epoch_view(rng);
        let order = rng.permutation(n);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = rows.select_rows(batch)?;
            let eps = rng.normal_tensor([batch.len(), model.latent_dim()]);
            let tape = Tape::new();
            let vars = model.bind(&tape);
            let xv = tape.constant(xb);
            let diverged = |e: Error| Error::Diverged {
                epoch,
                step,
                detail: e.to_string(),
            };
            let terms = model
                .elbo_on(&tape, &vars, xv, eps, beta)
                .map_err(diverged)?;
            let loss = tape.scalar(terms.loss);
            let grads = tape.backward(terms.loss)?.wrt(&vars);
            adam.step(&mut model.params_mut(), &grads)
                .map_err(diverged)?;
            model.head.clamp();
            total += loss.as_f64() * batch.len() as f64;
            step += 1;
        }
        trace.push(total / n as f64);
    }
    Ok(TrainReport {
        loss_trace: trace,
        final_gamma: Some(model.gamma().as_f64()),
    })
}
