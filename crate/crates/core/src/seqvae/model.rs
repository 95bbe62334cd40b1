use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{Linear, Parameterized};
use crate::numcore::{Rng, Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::seqvae::gru::{GruCell, GRU_TENSORS};
use crate::seqvae::vocab::{Vocab, BOS, EOS, PAD};
use crate::vae::{
    kl_on, reparameterize_on, CategoricalHead, ElboVars, GaussianPosterior, PosteriorVars,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeqVaeConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub decoder_layers: usize,
    pub max_len: usize,
}

impl Default for SeqVaeConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 64,
            latent_dim: 16,
            decoder_layers: 1,
            max_len: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Sample each token from `softmax(logits / temperature)`.
    Ancestral {
        temperature: f64,
    },
    Argmax,
}

impl Default for DecodeMode {
    fn default() -> Self {
        DecodeMode::Ancestral { temperature: 1.0 }
    }
}

/// Character-level VAE: GRU encoder, latent-initialised GRU decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqVaeModel<T> {
    pub vocab: Vocab,
    pub config: SeqVaeConfig,
    /// `[vocab × embed]`
    pub embedding: Tensor<T>,
    pub encoder: GruCell<T>,
    /// hidden → (mu ‖ logvar)
    pub to_posterior: Linear<T>,
    /// latent → initial hidden state of every decoder layer
    pub to_hidden: Linear<T>,
    pub decoder: Vec<GruCell<T>>,
    /// hidden → vocabulary logits
    pub output: Linear<T>,
}

struct Layout {
    emb: usize,
    enc: usize,
    post: usize,
    hid: usize,
    dec: usize,
    out: usize,
}

impl<T: Scalar> SeqVaeModel<T> {
    pub fn new(vocab: Vocab, config: SeqVaeConfig, rng: &mut Rng) -> Result<Self> {
        let c = &config;
        if c.embed_dim == 0
            || c.hidden_dim == 0
            || c.latent_dim == 0
            || c.decoder_layers == 0
            || c.max_len == 0
        {
            return Err(Error::InvalidArgument(format!(
                "sequence VAE sizes must be positive: {c:?}"
            )));
        }
        let v = vocab.len();
        let a = (6.0 / (v + c.embed_dim) as f64).sqrt();
        let emb = (0..v * c.embed_dim)
            .map(|_| T::lit(a * (2.0 * rng.uniform() - 1.0)))
            .collect();
        let embedding = Tensor::new([v, c.embed_dim], emb)?;
        let encoder = GruCell::new(c.embed_dim, c.hidden_dim, rng);
        let to_posterior = Linear::xavier(c.hidden_dim, 2 * c.latent_dim, rng);
        let to_hidden = Linear::xavier(c.latent_dim, c.hidden_dim * c.decoder_layers, rng);
        let decoder = (0..c.decoder_layers)
            .map(|l| {
                let input = if l == 0 { c.embed_dim } else { c.hidden_dim };
                GruCell::new(input, c.hidden_dim, rng)
            })
            .collect();
        let output = Linear::xavier(c.hidden_dim, v, rng);
        Ok(Self {
            vocab,
            config,
            embedding,
            encoder,
            to_posterior,
            to_hidden,
            decoder,
            output,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn layout(&self) -> Layout {
        let emb = 0;
        let enc = 1;
        let post = enc + GRU_TENSORS;
        let hid = post + 2;
        let dec = hid + 2;
        let out = dec + GRU_TENSORS * self.decoder.len();
        Layout {
            emb,
            enc,
            post,
            hid,
            dec,
            out,
        }
    }

    fn check_tokens(&self, seqs: &[Vec<usize>]) -> Result<()> {
        if seqs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let v = self.vocab_size();
        for s in seqs {
            if s.is_empty() {
                return Err(Error::InvalidArgument("empty token sequence".into()));
            }
            if let Some(&t) = s.iter().find(|&&t| t >= v) {
                return Err(Error::InvalidArgument(format!(
                    "token index {t} outside vocabulary of {v}"
                )));
            }
        }
        Ok(())
    }

    fn step_mask(&self, seqs: &[Vec<usize>], t: usize) -> Tensor<T> {
        let h = self.config.hidden_dim;
        let mut m = Tensor::zeros([seqs.len(), h]);
        for (row, s) in m.data_mut().chunks_mut(h).zip(seqs) {
            if t < s.len() {
                row.fill(T::one());
            }
        }
        m
    }

    /// Runs the encoder GRU over (padded) sequences. A row's state is frozen
    /// once its sequence ends, so padding never changes its posterior.
    pub fn encode_on(
        &self,
        tape: &Tape<T>,
        vars: &[Var],
        seqs: &[Vec<usize>],
    ) -> Result<PosteriorVars> {
        self.check_tokens(seqs)?;
        let lay = self.layout();
        let steps = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut h = tape.constant(Tensor::zeros([seqs.len(), self.config.hidden_dim]));
        for t in 0..steps {
            let idx: Vec<usize> = seqs
                .iter()
                .map(|s| s.get(t).copied().unwrap_or(PAD))
                .collect();
            let x = tape.gather_rows(vars[lay.emb], &idx)?;
            let h_new = self
                .encoder
                .step_on(tape, &vars[lay.enc..lay.enc + GRU_TENSORS], x, h)?;
            let mask = tape.constant(self.step_mask(seqs, t));
            let delta = tape.sub(h_new, h)?;
            let delta = tape.mul(mask, delta)?;
            h = tape.add(h, delta)?;
        }
        let out = self
            .to_posterior
            .forward_on(tape, &vars[lay.post..lay.post + 2], h)?;
        let l = self.config.latent_dim;
        Ok(PosteriorVars {
            mu: tape.slice_cols(out, 0, l)?,
            logvar: tape.slice_cols(out, l, 2 * l)?,
        })
    }

    /// Teacher-forced decoder logits: one `[B×V]` node per position, with the
    /// matching targets (`None` past a row's end-of-sequence).
    pub fn decode_teacher_on(
        &self,
        tape: &Tape<T>,
        vars: &[Var],
        z: Var,
        seqs: &[Vec<usize>],
    ) -> Result<Vec<(Var, Vec<Option<usize>>)>> {
        self.check_tokens(seqs)?;
        let lay = self.layout();
        let hd = self.config.hidden_dim;
        let init = self
            .to_hidden
            .forward_on(tape, &vars[lay.hid..lay.hid + 2], z)?;
        let mut hs = (0..self.decoder.len())
            .map(|l| tape.slice_cols(init, l * hd, (l + 1) * hd))
            .collect::<Result<Vec<_>>>()?;
        let steps = seqs.iter().map(Vec::len).max().unwrap_or(0) + 1;
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let inputs: Vec<usize> = seqs
                .iter()
                .map(|s| {
                    if t == 0 {
                        BOS
                    } else {
                        s.get(t - 1).copied().unwrap_or(PAD)
                    }
                })
                .collect();
            let targets: Vec<Option<usize>> = seqs
                .iter()
                .map(|s| match t.cmp(&s.len()) {
                    std::cmp::Ordering::Less => Some(s[t]),
                    std::cmp::Ordering::Equal => Some(EOS),
                    std::cmp::Ordering::Greater => None,
                })
                .collect();
            let mut x = tape.gather_rows(vars[lay.emb], &inputs)?;
            for (l, cell) in self.decoder.iter().enumerate() {
                let base = lay.dec + l * GRU_TENSORS;
                hs[l] = cell.step_on(tape, &vars[base..base + GRU_TENSORS], x, hs[l])?;
                x = hs[l];
            }
            let logits = self
                .output
                .forward_on(tape, &vars[lay.out..lay.out + 2], x)?;
            out.push((logits, targets));
        }
        Ok(out)
    }

    /// Batch-mean negative ELBO: summed token cross-entropy plus `beta`·KL.
    pub fn elbo_on(
        &self,
        tape: &Tape<T>,
        vars: &[Var],
        seqs: &[Vec<usize>],
        eps: Tensor<T>,
        beta: T,
    ) -> Result<ElboVars> {
        let inv_b = T::one() / T::lit(seqs.len() as f64);
        let post = self.encode_on(tape, vars, seqs)?;
        let z = reparameterize_on(tape, post, eps)?;
        let steps = self.decode_teacher_on(tape, vars, z, seqs)?;
        let mut nll: Option<Var> = None;
        for (logits, targets) in &steps {
            let ce = tape.softmax_cross_entropy(*logits, targets)?;
            nll = Some(match nll {
                Some(acc) => tape.add(acc, ce)?,
                None => ce,
            });
        }
        let recon = tape.scale(nll.expect("at least one step"), inv_b)?;
        let kl = kl_on(tape, post)?;
        let kl = tape.scale(kl, inv_b)?;
        let weighted = tape.scale(kl, beta)?;
        let loss = tape.add(recon, weighted)?;
        Ok(ElboVars { loss, recon, kl })
    }

    /// Posterior for each sequence of token indices.
    pub fn encode_batch(&self, seqs: &[Vec<usize>]) -> Result<GaussianPosterior<T>> {
        let tape = Tape::new();
        let vars = self.bind(&tape);
        let p = self.encode_on(&tape, &vars, seqs)?;
        let (mu, logvar) = (tape.value(p.mu).clone(), tape.value(p.logvar).clone());
        GaussianPosterior::new(mu, logvar)
    }

    pub fn encode_sequence(&self, tokens: &[usize]) -> Result<GaussianPosterior<T>> {
        self.encode_batch(&[tokens.to_vec()])
    }

    /// Teacher-forced logits for one sequence; `[len+1 × vocab]`, the last
    /// row predicting end-of-sequence. Specials in `targets` are stripped first.
    pub fn decode_sequence_train(
        &self,
        z: &Tensor<T>,
        targets: &[usize],
    ) -> Result<CategoricalHead<T>> {
        let body: Vec<usize> = targets
            .iter()
            .copied()
            .filter(|&t| t != BOS && t != EOS && t != PAD)
            .collect();
        if body.is_empty() {
            return Err(Error::InvalidArgument("target sequence is empty".into()));
        }
        if z.numel() != self.latent_dim() {
            return Err(shape_err(
                "decode_sequence_train",
                format!(
                    "latent of {} values, expected {}",
                    z.numel(),
                    self.latent_dim()
                ),
            ));
        }
        let tape = Tape::new();
        let vars = self.bind(&tape);
        let zv = tape.constant(z.clone().reshape([1, self.latent_dim()])?);
        let steps = self.decode_teacher_on(&tape, &vars, zv, &[body])?;
        let v = self.vocab_size();
        let mut data = Vec::with_capacity(steps.len() * v);
        for (logits, _) in &steps {
            data.extend_from_slice(tape.value(*logits).data());
        }
        Ok(CategoricalHead {
            logits: Tensor::new([steps.len(), v], data)?,
        })
    }

    /// Autoregressive generation for each row of `z`, stopping at
    /// end-of-sequence or `max_len` tokens. Padding and begin-of-sequence are
    /// never emitted.
    pub fn sample_tokens(
        &self,
        z: &Tensor<T>,
        rng: &mut Rng,
        mode: DecodeMode,
        max_len: usize,
    ) -> Result<Vec<Vec<usize>>> {
        let (b, l) = z.dims2()?;
        if l != self.latent_dim() {
            return Err(shape_err(
                "sample_sequence",
                format!(
                    "latent has {l} columns, model expects {}",
                    self.latent_dim()
                ),
            ));
        }
        let hd = self.config.hidden_dim;
        let init = self.to_hidden.forward(z)?;
        let mut hs: Vec<Tensor<T>> = (0..self.decoder.len())
            .map(|layer| {
                let mut d = Vec::with_capacity(b * hd);
                for row in init.rows() {
                    d.extend_from_slice(&row[layer * hd..(layer + 1) * hd]);
                }
                Tensor::new([b, hd], d)
            })
            .collect::<Result<_>>()?;
        let mut inputs = vec![BOS; b];
        let mut done = vec![false; b];
        let mut out = vec![Vec::new(); b];
        for _ in 0..max_len {
            let mut x = self.embedding.select_rows(&inputs)?;
            for (cell, h) in self.decoder.iter().zip(hs.iter_mut()) {
                *h = cell.step(&x, h)?;
                x = h.clone();
            }
            let logits = self.output.forward(&x)?;
            for (i, row) in logits.rows().enumerate() {
                if done[i] {
                    continue;
                }
                let tok = choose(row, mode, rng);
                if tok == EOS {
                    done[i] = true;
                } else {
                    out[i].push(tok);
                }
                inputs[i] = tok;
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out)
    }

    pub fn sample_sequence(
        &self,
        z: &Tensor<T>,
        rng: &mut Rng,
        mode: DecodeMode,
        max_len: usize,
    ) -> Result<String> {
        let z = z.clone().reshape([1, z.numel()])?;
        let toks = self.sample_tokens(&z, rng, mode, max_len)?;
        Ok(self.vocab.decode(&toks[0]))
    }
}

/// Picks a token from one row of logits, never PAD or BOS.
fn choose<T: Scalar>(row: &[T], mode: DecodeMode, rng: &mut Rng) -> usize {
    let allowed = || row.iter().enumerate().skip(EOS);
    match mode {
        DecodeMode::Argmax => {
            let mut best = EOS;
            for (i, &v) in allowed() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        }
        DecodeMode::Ancestral { temperature } => {
            let tau = temperature.max(1e-6);
            let max = allowed()
                .map(|(_, v)| v.as_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = allowed()
                .map(|(_, v)| ((v.as_f64() - max) / tau).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.uniform() * total;
            for (k, w) in weights.iter().enumerate() {
                if u < *w {
                    return EOS + k;
                }
                u -= w;
            }
            // rounding fallthrough: last positive-weight token
            EOS + weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
        }
    }
}

impl<T: Scalar> Parameterized<T> for SeqVaeModel<T> {
    fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        out.extend(self.encoder.named("encoder"));
        out.extend(self.to_posterior.named("to_posterior"));
        out.extend(self.to_hidden.named("to_hidden"));
        for (l, cell) in self.decoder.iter().enumerate() {
            out.extend(cell.named(&format!("decoder.{l}")));
        }
        out.extend(self.output.named("output"));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.encoder.tensors_mut());
        out.extend([&mut self.to_posterior.weight, &mut self.to_posterior.bias]);
        out.extend([&mut self.to_hidden.weight, &mut self.to_hidden.bias]);
        for cell in &mut self.decoder {
            out.extend(cell.tensors_mut());
        }
        out.extend([&mut self.output.weight, &mut self.output.bias]);
        out
    }
}
