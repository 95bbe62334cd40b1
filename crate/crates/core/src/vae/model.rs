use crate::error::{shape_err, Result};
use crate::nn::{Mlp, Parameterized};
use crate::numcore::{Rng, Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::vae::loss::{
    gaussian_nll_on, kl_on, reparameterize_on, GaussianPosterior, PosteriorVars,
};

/// Smallest decoder variance the head may reach.
pub const GAMMA_MIN: f64 = 1e-6;

/// Gaussian observation model `N(mean, γI)` with one learnable `log γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHead<T> {
    pub log_gamma: Tensor<T>,
}

impl<T: Scalar> GaussianHead<T> {
    pub fn new(gamma: f64) -> Self {
        Self {
            log_gamma: Tensor::scalar(T::lit(gamma.max(GAMMA_MIN).ln())),
        }
    }

    pub fn gamma(&self) -> T {
        self.log_gamma.data()[0].max(T::lit(GAMMA_MIN.ln())).exp()
    }

    /// Projects `log γ` back above the floor after an optimizer step.
    pub fn clamp(&mut self) {
        let floor = T::lit(GAMMA_MIN.ln());
        let lg = &mut self.log_gamma.data_mut()[0];
        if *lg < floor {
            *lg = floor;
        }
    }
}

/// Loss components for one batch, averaged per data point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms<T> {
    /// Negative expected log-likelihood (single-sample estimate).
    pub recon: T,
    pub kl: T,
    pub beta: T,
}

impl<T: Scalar> ElboTerms<T> {
    /// `recon + β·kl`; minimizing it maximizes the β-weighted bound.
    pub fn loss(&self) -> T {
        self.recon + self.beta * self.kl
    }
}

/// Fully connected VAE over real vectors with a Gaussian decoder head.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel<T> {
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
    pub head: GaussianHead<T>,
    latent_dim: usize,
}

/// Tape-side result of [`VaeModel::elbo_on`].
#[derive(Clone, Copy, Debug)]
pub struct ElboVars {
    pub loss: Var,
    pub recon: Var,
    pub kl: Var,
}

impl<T: Scalar> VaeModel<T> {
    /// Encoder `input → hidden… → 2·latent`, decoder `latent → hidden… → input`.
    pub fn new(
        input_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        let enc: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(2 * latent_dim))
            .collect();
        let dec: Vec<usize> = std::iter::once(latent_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(input_dim))
            .collect();
        let encoder = Mlp::new(&enc, rng)?;
        let decoder = Mlp::new(&dec, rng)?;
        Self::from_parts(encoder, decoder, GaussianHead::new(1.0))
    }

    pub fn from_parts(encoder: Mlp<T>, decoder: Mlp<T>, head: GaussianHead<T>) -> Result<Self> {
        let latent_dim = decoder.in_dim();
        if encoder.out_dim() != 2 * latent_dim {
            return Err(shape_err(
                "vae",
                format!(
                    "encoder emits {} values, expected 2 x latent {latent_dim}",
                    encoder.out_dim()
                ),
            ));
        }
        if decoder.out_dim() != encoder.in_dim() {
            return Err(shape_err(
                "vae",
                format!(
                    "decoder emits {}, encoder takes {}",
                    decoder.out_dim(),
                    encoder.in_dim()
                ),
            ));
        }
        if head.log_gamma.numel() != 1 {
            return Err(shape_err("vae", "log_gamma must hold one value"));
        }
        Ok(Self {
            encoder,
            decoder,
            head,
            latent_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn gamma(&self) -> T {
        self.head.gamma()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c) = x.dims2()?;
        if c != self.input_dim() {
            return Err(shape_err(
                "encode",
                format!("input has {c} columns, model expects {}", self.input_dim()),
            ));
        }
        Ok(())
    }

    fn split_vars<'a>(&self, vars: &'a [Var]) -> (&'a [Var], &'a [Var], Var) {
        let ne = self.encoder.n_tensors();
        let nd = self.decoder.n_tensors();
        (&vars[..ne], &vars[ne..ne + nd], vars[ne + nd])
    }

    pub fn encode_on(&self, tape: &Tape<T>, vars: &[Var], x: Var) -> Result<PosteriorVars> {
        let (enc, _, _) = self.split_vars(vars);
        let h = self.encoder.forward_on(tape, enc, x)?;
        let l = self.latent_dim;
        Ok(PosteriorVars {
            mu: tape.slice_cols(h, 0, l)?,
            logvar: tape.slice_cols(h, l, 2 * l)?,
        })
    }

    pub fn decode_on(&self, tape: &Tape<T>, vars: &[Var], z: Var) -> Result<Var> {
        let (_, dec, _) = self.split_vars(vars);
        self.decoder.forward_on(tape, dec, z)
    }

    /// Posterior `q(z|x)` for each row of `x`.
    pub fn encode(&self, x: &Tensor<T>) -> Result<GaussianPosterior<T>> {
        self.check_input(x)?;
        let tape = Tape::new();
        let vars = self.bind(&tape);
        let xv = tape.constant(x.clone());
        let p = self.encode_on(&tape, &vars, xv)?;
        let (mu, logvar) = (tape.value(p.mu).clone(), tape.value(p.logvar).clone());
        GaussianPosterior::new(mu, logvar)
    }

    /// Decoder mean for each row of `z`.
    pub fn decode_mean(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c) = z.dims2()?;
        if c != self.latent_dim {
            return Err(shape_err(
                "decode",
                format!("latent has {c} columns, model expects {}", self.latent_dim),
            ));
        }
        self.decoder.forward(z)
    }

    /// Decoder sample `mean + √γ·ε`.
    pub fn decode_sample(&self, z: &Tensor<T>, rng: &mut Rng) -> Result<Tensor<T>> {
        let mut x = self.decode_mean(z)?;
        let sd = self.gamma().sqrt();
        for v in x.data_mut() {
            *v += sd * T::lit(rng.standard_normal());
        }
        Ok(x)
    }

    /// Batch-mean negative ELBO with a single reparameterized sample per row.
    pub fn elbo_on(
        &self,
        tape: &Tape<T>,
        vars: &[Var],
        x: Var,
        eps: Tensor<T>,
        beta: T,
    ) -> Result<ElboVars> {
        let batch = tape.value(x).dims2()?.0;
        let inv_b = T::one() / T::lit(batch.max(1) as f64);
        let post = self.encode_on(tape, vars, x)?;
        let z = reparameterize_on(tape, post, eps)?;
        let mean = self.decode_on(tape, vars, z)?;
        let (_, _, lg) = self.split_vars(vars);
        let nll = gaussian_nll_on(tape, x, mean, lg)?;
        let recon = tape.scale(nll, inv_b)?;
        let kl = kl_on(tape, post)?;
        let kl = tape.scale(kl, inv_b)?;
        let weighted = tape.scale(kl, beta)?;
        let loss = tape.add(recon, weighted)?;
        Ok(ElboVars { loss, recon, kl })
    }

    /// Evaluates the loss terms on `x` with fresh noise from `rng`.
    pub fn elbo_loss(&self, x: &Tensor<T>, rng: &mut Rng, beta: T) -> Result<ElboTerms<T>> {
        self.check_input(x)?;
        let eps = rng.normal_tensor([x.dims2()?.0, self.latent_dim]);
        self.elbo_with_noise(x, eps, beta)
    }

    pub fn elbo_with_noise(&self, x: &Tensor<T>, eps: Tensor<T>, beta: T) -> Result<ElboTerms<T>> {
        let tape = Tape::new();
        let vars = self.bind(&tape);
        let xv = tape.constant(x.clone());
        let e = self.elbo_on(&tape, &vars, xv, eps, beta)?;
        Ok(ElboTerms {
            recon: tape.scalar(e.recon),
            kl: tape.scalar(e.kl),
            beta,
        })
    }
}

impl<T: Scalar> Parameterized<T> for VaeModel<T> {
    fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.encoder.named("encoder");
        out.extend(self.decoder.named("decoder"));
        out.push(("head.log_gamma".to_string(), &self.head.log_gamma));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.decoder.tensors_mut());
        out.push(&mut self.head.log_gamma);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;

    #[test]
    fn zero_weight_encoder_returns_bias() {
        let mut rng = Rng::new(3);
        let mut m = VaeModel::<f64>::new(4, 2, &[], &mut rng).unwrap();
        m.encoder.layers[0].weight = Tensor::zeros([4, 4]);
        m.encoder.layers[0].bias = Tensor::from_f64([4], &[0.1, 0.2, -0.3, -0.4]).unwrap();
        let x = Tensor::from_f64([1, 4], &[5.0, -1.0, 2.0, 9.0]).unwrap();
        let p = m.encode(&x).unwrap();
        assert_eq!(p.mu.data(), &[0.1, 0.2]);
        assert_eq!(p.logvar.data(), &[-0.3, -0.4]);
    }

    #[test]
    fn posterior_shapes_and_determinism() {
        let mut rng = Rng::new(5);
        let m = VaeModel::<f64>::new(6, 3, &[8, 8], &mut rng).unwrap();
        let x: Tensor<f64> = rng.normal_tensor([2, 6]);
        let a = m.encode(&x).unwrap();
        assert_eq!(a.mu.shape(), &[2, 3]);
        assert_eq!(a.logvar.shape(), &[2, 3]);
        assert_eq!(a, m.encode(&x).unwrap());
        assert!(m.encode(&Tensor::zeros([2, 5])).is_err());
    }

    #[test]
    fn beta_zero_is_pure_reconstruction() {
        let mut rng = Rng::new(6);
        let m = VaeModel::<f64>::new(3, 2, &[4], &mut rng).unwrap();
        let x: Tensor<f64> = rng.normal_tensor([4, 3]);
        let t = m.elbo_loss(&x, &mut Rng::new(1), 0.0).unwrap();
        assert_eq!(t.loss(), t.recon);
    }

    #[test]
    fn prior_collapsed_encoder_has_zero_kl() {
        let mut rng = Rng::new(8);
        let mut m = VaeModel::<f64>::new(3, 2, &[], &mut rng).unwrap();
        m.encoder.layers[0] = Linear::zeros(3, 4);
        let x: Tensor<f64> = rng.normal_tensor([4, 3]);
        let t = m.elbo_loss(&x, &mut rng, 1.0).unwrap();
        assert_eq!(t.kl, 0.0);
    }

    #[test]
    fn mismatched_parts_rejected() {
        let mut rng = Rng::new(1);
        let enc = Mlp::<f64>::new(&[4, 6], &mut rng).unwrap();
        let dec = Mlp::<f64>::new(&[2, 4], &mut rng).unwrap();
        assert!(VaeModel::from_parts(enc, dec, GaussianHead::new(1.0)).is_err());
    }

    #[test]
    fn gamma_never_below_floor() {
        let mut h = GaussianHead::<f64>::new(1.0);
        h.log_gamma.data_mut()[0] = -50.0;
        assert!((h.gamma() - GAMMA_MIN).abs() < 1e-18);
        h.clamp();
        assert!((h.log_gamma.data()[0] - GAMMA_MIN.ln()).abs() < 1e-12);
    }
}
