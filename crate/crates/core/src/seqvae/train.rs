use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameterized;
use crate::numcore::{AdamConfig, AdamState, Rng, Tape, Tensor};
use crate::scalar::Scalar;
use crate::seqvae::model::SeqVaeModel;
use crate::seqvae::vocab::EOS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeqTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Final KL coefficient.
    pub beta: f64,
    /// Fraction of all steps over which the KL coefficient ramps from 0 to `beta`.
    pub anneal_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for SeqTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            beta: 0.1,
            anneal_fraction: 0.2,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
        }
    }
}

impl SeqTrainConfig {
    /// KL coefficient at optimizer step `step` of `total`.
    pub fn beta_at(&self, step: usize, total: usize) -> f64 {
        let ramp = self.anneal_fraction * total as f64;
        if ramp <= 0.0 {
            self.beta
        } else {
            self.beta * (step as f64 / ramp).min(1.0)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeqTrainReport {
    /// Mean per-sequence loss of each epoch.
    pub loss_trace: Vec<f64>,
    /// Mean per-position decoder entropy on the training set after each epoch
    /// (only recorded when `track_entropy` was requested).
    pub entropy_trace: Vec<f64>,
}

/// Teacher-forced fit statistics of a model on a set of sequences, decoding
/// from the posterior means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeqEval {
    /// Mean per-sequence negative log-likelihood (nats).
    pub nll: f64,
    /// Mean entropy of the output distribution per decoded position (nats).
    pub mean_entropy: f64,
    pub positions: usize,
}

/// Minibatch Adam on the annealed negative ELBO.
pub fn train_seqvae<T: Scalar>(
    model: &mut SeqVaeModel<T>,
    seqs: &[Vec<usize>],
    config: &SeqTrainConfig,
    rng: &mut Rng,
) -> Result<SeqTrainReport> {
    train_seqvae_tracked(model, seqs, config, rng, false)
}

pub fn train_seqvae_tracked<T: Scalar>(
    model: &mut SeqVaeModel<T>,
    seqs: &[Vec<usize>],
    config: &SeqTrainConfig,
    rng: &mut Rng,
    track_entropy: bool,
) -> Result<SeqTrainReport> {
    let n = seqs.len();
    if n == 0 {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let per_epoch = n.div_ceil(config.batch_size);
    let total = per_epoch * config.epochs;
    let mut adam = AdamState::new(config.adam);
    let mut report = SeqTrainReport::default();
    let mut step = 0;
    for epoch in 0..config.epochs {
        let order = rng.permutation(n);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let eps = rng.normal_tensor([batch.len(), model.latent_dim()]);
            let beta = T::lit(config.beta_at(step, total));
            let diverged = |e: Error| Error::Diverged {
                epoch,
                step,
                detail: e.to_string(),
            };
            let tape = Tape::new();
            let vars = model.bind(&tape);
            let terms = model
                .elbo_on(&tape, &vars, &batch, eps, beta)
                .map_err(diverged)?;
            sum += tape.scalar(terms.loss).as_f64() * batch.len() as f64;
            let grads = tape.backward(terms.loss)?.wrt(&vars);
            adam.step(&mut model.params_mut(), &grads)
                .map_err(diverged)?;
            step += 1;
        }
        report.loss_trace.push(sum / n as f64);
        if track_entropy {
            report
                .entropy_trace
                .push(evaluate(model, seqs)?.mean_entropy);
        }
    }
    Ok(report)
}

/// Teacher-forced NLL and per-position entropy, decoding from posterior means.
pub fn evaluate<T: Scalar>(model: &SeqVaeModel<T>, seqs: &[Vec<usize>]) -> Result<SeqEval> {
    if seqs.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let mut nll = 0.0;
    let mut entropy = 0.0;
    let mut positions = 0;
    for chunk in seqs.chunks(64) {
        let post = model.encode_batch(chunk)?;
        for (s, mu) in chunk.iter().zip(post.mu.rows()) {
            let z = Tensor::new([mu.len()], mu.to_vec())?;
            let head = model.decode_sequence_train(&z, s)?;
            let probs = head.probabilities()?;
            let targets = s.iter().copied().chain(std::iter::once(EOS));
            for (row, t) in probs.rows().zip(targets) {
                nll -= row[t].as_f64().max(f64::MIN_POSITIVE).ln();
                entropy -= row
                    .iter()
                    .map(|p| p.as_f64())
                    .filter(|&p| p > 0.0)
                    .map(|p| p * p.ln())
                    .sum::<f64>();
                positions += 1;
            }
        }
    }
    Ok(SeqEval {
        nll: nll / seqs.len() as f64,
        mean_entropy: entropy / positions as f64,
        positions,
    })
}
