//! Terms of the evidence lower bound, on plain values and on the tape.

use crate::error::{shape_err, Error, Result};
use crate::numcore::{Rng, Tape, Tensor, Var};
use crate::scalar::Scalar;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Diagonal Gaussian `q(z|x)`, one row per input.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior<T> {
    pub mu: Tensor<T>,
    pub logvar: Tensor<T>,
}

impl<T: Scalar> GaussianPosterior<T> {
    pub fn new(mu: Tensor<T>, logvar: Tensor<T>) -> Result<Self> {
        mu.expect_same_shape(&logvar, "posterior")?;
        Ok(Self { mu, logvar })
    }

    pub fn latent_dim(&self) -> usize {
        *self.mu.shape().last().unwrap_or(&0)
    }
}

/// Tape handles for a posterior.
#[derive(Clone, Copy, Debug)]
pub struct PosteriorVars {
    pub mu: Var,
    pub logvar: Var,
}

/// Per-position logits of a categorical decoder, `[seq_len × vocab]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalHead<T> {
    pub logits: Tensor<T>,
}

impl<T: Scalar> CategoricalHead<T> {
    /// Row-wise softmax.
    pub fn probabilities(&self) -> Result<Tensor<T>> {
        let (_, c) = self.logits.dims2()?;
        let mut out = self.logits.clone();
        for row in out.data_mut().chunks_mut(c) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        Ok(out)
    }
}

/// `z = mu + exp(½·logvar) ⊙ ε`, ε ~ N(0, I).
pub fn reparameterize<T: Scalar>(post: &GaussianPosterior<T>, rng: &mut Rng) -> Tensor<T> {
    let eps: Tensor<T> = rng.normal_tensor(post.mu.shape().to_vec());
    reparameterize_with(post, &eps)
}

pub fn reparameterize_with<T: Scalar>(post: &GaussianPosterior<T>, eps: &Tensor<T>) -> Tensor<T> {
    let half = T::lit(0.5);
    let mut z = post.mu.clone();
    for ((zi, &lv), &e) in z
        .data_mut()
        .iter_mut()
        .zip(post.logvar.data())
        .zip(eps.data())
    {
        *zi += (half * lv).exp() * e;
    }
    z
}

pub fn reparameterize_on<T: Scalar>(
    tape: &Tape<T>,
    post: PosteriorVars,
    eps: Tensor<T>,
) -> Result<Var> {
    let half = tape.scale(post.logvar, T::lit(0.5))?;
    let std = tape.exp(half)?;
    let e = tape.constant(eps);
    let noise = tape.mul(std, e)?;
    tape.add(post.mu, noise)
}

/// `½ Σ (mu² + exp(logvar) − 1 − logvar)`, summed over every row.
pub fn kl_to_standard_normal<T: Scalar>(post: &GaussianPosterior<T>) -> Result<T> {
    if !post.mu.is_finite() || !post.logvar.is_finite() {
        return Err(Error::NonFinite {
            op: "kl_to_standard_normal",
        });
    }
    let half = T::lit(0.5);
    let kl = post
        .mu
        .data()
        .iter()
        .zip(post.logvar.data())
        .map(|(&m, &lv)| half * (m * m + lv.exp() - T::one() - lv))
        .sum();
    Ok(kl)
}

pub fn kl_on<T: Scalar>(tape: &Tape<T>, post: PosteriorVars) -> Result<Var> {
    let n = tape.value(post.mu).numel();
    let mu2 = tape.mul(post.mu, post.mu)?;
    let var = tape.exp(post.logvar)?;
    let s = tape.add(mu2, var)?;
    let s = tape.sub(s, post.logvar)?;
    let s = tape.sum(s)?;
    tape.affine(s, T::lit(0.5), T::lit(-0.5 * n as f64))
}

/// `Σ ½[(x − mean)²/γ + ln γ + ln 2π]`
pub fn gaussian_nll<T: Scalar>(x: &Tensor<T>, mean: &Tensor<T>, gamma: T) -> Result<T> {
    if gamma.is_nan() || gamma <= T::zero() {
        return Err(Error::InvalidArgument(format!(
            "decoder variance must be positive, got {gamma}"
        )));
    }
    x.expect_same_shape(mean, "gaussian_nll")?;
    let half = T::lit(0.5);
    let c = gamma.ln() + T::lit(LN_2PI);
    Ok(x.data()
        .iter()
        .zip(mean.data())
        .map(|(&a, &m)| half * ((a - m) * (a - m) / gamma + c))
        .sum())
}

/// Tape version with the variance given as `log_gamma` (a `[1]` node).
pub fn gaussian_nll_on<T: Scalar>(
    tape: &Tape<T>,
    x: Var,
    mean: Var,
    log_gamma: Var,
) -> Result<Var> {
    let n = tape.value(x).numel() as f64;
    let diff = tape.sub(x, mean)?;
    let sq = tape.mul(diff, diff)?;
    let s = tape.sum(sq)?;
    let neg = tape.scale(log_gamma, -T::one())?;
    let inv_gamma = tape.exp(neg)?;
    let quad = tape.mul(s, inv_gamma)?;
    let quad = tape.scale(quad, T::lit(0.5))?;
    let norm = tape.affine(log_gamma, T::lit(0.5 * n), T::lit(0.5 * n * LN_2PI))?;
    tape.add(quad, norm)
}

/// `Σ_t −log softmax(logits_t)[target_t]` over unmasked positions.
pub fn categorical_nll<T: Scalar>(
    targets: &[Option<usize>],
    head: &CategoricalHead<T>,
) -> Result<T> {
    let (rows, vocab) = head.logits.dims2()?;
    if rows != targets.len() {
        return Err(shape_err(
            "categorical_nll",
            format!("{rows} positions vs {} targets", targets.len()),
        ));
    }
    if let Some(t) = targets.iter().flatten().find(|&&t| t >= vocab) {
        return Err(Error::InvalidArgument(format!(
            "target index {t} out of range for vocabulary of {vocab}"
        )));
    }
    let tape = Tape::new();
    let logits = tape.constant(head.logits.clone());
    let nll = tape.softmax_cross_entropy(logits, targets)?;
    Ok(tape.scalar(nll))
}
