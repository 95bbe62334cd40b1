//! Multi-stage training and sampling.
//!
//! Stage 1 is fit to the data. Every later stage is a Gaussian VAE fit to the
//! latent samples of the stage before it, with latent size equal to its input
//! size. Sampling draws from the prior of the deepest requested stage and
//! decodes down to the data.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint};
use crate::error::{Error, Result};
use crate::numcore::{AdamConfig, Rng, Tensor};
use crate::scalar::Scalar;
use crate::seqvae::{self, DecodeMode, SeqTrainConfig, SeqVaeConfig, SeqVaeModel, Vocab};
use crate::vae::{self, reparameterize, GaussianPosterior, TrainConfig, TrainingData, VaeModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Real vectors, Gaussian observation model with learnable variance.
    #[default]
    Gaussian,
    /// Token sequences, softmax over the vocabulary at every position.
    Categorical,
}

/// Options that only apply to a sequence (categorical) stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceOptions {
    pub embed_dim: usize,
    pub decoder_layers: usize,
    pub max_len: usize,
    pub anneal_fraction: f64,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        let c = SeqVaeConfig::default();
        Self {
            embed_dim: c.embed_dim,
            decoder_layers: c.decoder_layers,
            max_len: c.max_len,
            anneal_fraction: SeqTrainConfig::default().anneal_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageSpec {
    pub head: HeadKind,
    pub latent_dim: usize,
    /// Hidden widths of the encoder and decoder MLPs; a sequence stage uses
    /// the single entry as its GRU state size.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub lr: f64,
    pub sequence: SequenceOptions,
}

impl Default for StageSpec {
    fn default() -> Self {
        Self {
            head: HeadKind::Gaussian,
            latent_dim: 2,
            hidden: vec![64, 64],
            epochs: 100,
            batch_size: 100,
            beta: 1.0,
            lr: 1e-3,
            sequence: SequenceOptions::default(),
        }
    }
}

impl StageSpec {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            beta: self.beta,
            adam: self.adam(),
        }
    }

    pub fn seq_train_config(&self) -> SeqTrainConfig {
        SeqTrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            beta: self.beta,
            anneal_fraction: self.sequence.anneal_fraction,
            adam: self.adam(),
        }
    }

    pub fn seq_config(&self) -> SeqVaeConfig {
        SeqVaeConfig {
            embed_dim: self.sequence.embed_dim,
            hidden_dim: self.hidden.first().copied().unwrap_or(0),
            latent_dim: self.latent_dim,
            decoder_layers: self.sequence.decoder_layers,
            max_len: self.sequence.max_len,
        }
    }
}

/// Training input of stage 1.
#[derive(Clone, Copy, Debug)]
pub enum CascadeData<'a, T> {
    Vectors(&'a Tensor<T>),
    Sequences {
        vocab: &'a Vocab,
        seqs: &'a [Vec<usize>],
    },
}

impl<T: Scalar> CascadeData<'_, T> {
    fn len(&self) -> Result<usize> {
        match self {
            CascadeData::Vectors(x) => Ok(x.dims2()?.0),
            CascadeData::Sequences { seqs, .. } => Ok(seqs.len()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeOptions {
    /// Train stages ≥ 2 on a fresh posterior sample every epoch instead of
    /// the single saved sample.
    pub resample_latents: bool,
}

/// Posterior samples of one stage over its whole training set.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDataset<T> {
    /// One-based index of the stage that produced these latents.
    pub stage: usize,
    pub seed: u64,
    /// `[n × latent]`, one reparameterized draw per input row.
    pub samples: Tensor<T>,
    pub posterior: GaussianPosterior<T>,
}

impl<T: Scalar> LatentDataset<T> {
    pub fn len(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn latent_dim(&self) -> usize {
        self.samples.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Stage<T> {
    Gaussian(VaeModel<T>),
    Sequence(SeqVaeModel<T>),
}

impl<T: Scalar> Stage<T> {
    pub fn latent_dim(&self) -> usize {
        match self {
            Stage::Gaussian(m) => m.latent_dim(),
            Stage::Sequence(m) => m.latent_dim(),
        }
    }

    /// Input width of a Gaussian stage; `None` for sequence stages.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Stage::Gaussian(m) => Some(m.input_dim()),
            Stage::Sequence(_) => None,
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            Stage::Gaussian(_) => HeadKind::Gaussian,
            Stage::Sequence(_) => HeadKind::Categorical,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageReport {
    pub loss_trace: Vec<f64>,
    pub final_gamma: Option<f64>,
}

/// Trained stages, data-facing first, with the latents each one produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Cascade<T> {
    pub stages: Vec<Stage<T>>,
    pub latents: Vec<LatentDataset<T>>,
    pub reports: Vec<StageReport>,
    pub seed: u64,
}

/// Generated data at stage 1.
#[derive(Clone, Debug, PartialEq)]
pub enum ChainSamples<T> {
    Vectors(Tensor<T>),
    Sequences(Vec<String>),
}

impl<T> ChainSamples<T> {
    pub fn len(&self) -> usize {
        match self {
            ChainSamples::Vectors(t) => t.shape()[0],
            ChainSamples::Sequences(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleOptions {
    /// Add decoder noise `√γ·ε` when passing through stages ≥ 2.
    pub intermediate_noise: bool,
    pub decode_mode: DecodeMode,
}

/// Checks the dimension chain and head kinds without training anything.
pub fn validate_specs(specs: &[StageSpec], first: HeadKind) -> Result<()> {
    let bad = |stage: usize, msg: String| Error::Stage {
        stage,
        source: Box::new(Error::InvalidArgument(msg)),
    };
    if specs.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one stage is required".into(),
        ));
    }
    for (i, s) in specs.iter().enumerate() {
        let k = i + 1;
        if s.latent_dim == 0 {
            return Err(bad(k, format!("invalid sizes in {s:?}")));
        }
        if s.batch_size == 0 {
            return Err(bad(k, "batch_size must be positive".into()));
        }
        if !(s.lr > 0.0 && s.lr.is_finite()) || !(s.beta >= 0.0 && s.beta.is_finite()) {
            return Err(bad(
                k,
                format!("lr {} / beta {} out of range", s.lr, s.beta),
            ));
        }
        let expect = if i == 0 { first } else { HeadKind::Gaussian };
        if s.head != expect {
            return Err(bad(
                k,
                format!(
                    "head {:?} does not fit its input, expected {expect:?}",
                    s.head
                ),
            ));
        }
        if s.head == HeadKind::Categorical && s.hidden.len() != 1 {
            return Err(bad(
                k,
                "a sequence stage takes exactly one hidden width".into(),
            ));
        }
        if s.hidden.contains(&0) {
            return Err(bad(k, "hidden widths must be positive".into()));
        }
        if i > 0 && s.latent_dim != specs[i - 1].latent_dim {
            return Err(bad(
                k,
                format!(
                    "latent_dim {} must equal its input dim {} (stage {} latent)",
                    s.latent_dim,
                    specs[i - 1].latent_dim,
                    i
                ),
            ));
        }
    }
    Ok(())
}

/// One posterior sample per input row of a Gaussian stage.
pub fn extract_latents<T: Scalar>(
    model: &VaeModel<T>,
    data: &Tensor<T>,
    stage: usize,
    rng: &mut Rng,
) -> Result<LatentDataset<T>> {
    let posterior = model.encode(data)?;
    latents_from_posterior(posterior, stage, rng)
}

/// One posterior sample per sequence of a sequence stage.
pub fn extract_sequence_latents<T: Scalar>(
    model: &SeqVaeModel<T>,
    seqs: &[Vec<usize>],
    stage: usize,
    rng: &mut Rng,
) -> Result<LatentDataset<T>> {
    let l = model.latent_dim();
    let mut mu = Vec::with_capacity(seqs.len() * l);
    let mut lv = Vec::with_capacity(seqs.len() * l);
    for chunk in seqs.chunks(256) {
        let p = model.encode_batch(chunk)?;
        mu.extend_from_slice(p.mu.data());
        lv.extend_from_slice(p.logvar.data());
    }
    let posterior = GaussianPosterior::new(
        Tensor::new([seqs.len(), l], mu)?,
        Tensor::new([seqs.len(), l], lv)?,
    )?;
    latents_from_posterior(posterior, stage, rng)
}

fn latents_from_posterior<T: Scalar>(
    posterior: GaussianPosterior<T>,
    stage: usize,
    rng: &mut Rng,
) -> Result<LatentDataset<T>> {
    let samples = reparameterize(&posterior, rng);
    samples.ensure_finite("extract_latents")?;
    Ok(LatentDataset {
        stage,
        seed: rng.seed(),
        samples,
        posterior,
    })
}

/// Trains every stage in order. Stage `k` draws its randomness from
/// substream `k` of `rng`, so a cascade is determined by the seed alone.
pub fn train_cascade<T: Scalar>(
    specs: &[StageSpec],
    data: CascadeData<'_, T>,
    options: CascadeOptions,
    rng: &Rng,
) -> Result<Cascade<T>> {
    let first = match data {
        CascadeData::Vectors(_) => HeadKind::Gaussian,
        CascadeData::Sequences { .. } => HeadKind::Categorical,
    };
    validate_specs(specs, first)?;
    if data.len()? == 0 {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut stages = Vec::with_capacity(specs.len());
    let mut latents: Vec<LatentDataset<T>> = Vec::with_capacity(specs.len());
    let mut reports = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let k = i + 1;
        let tag = |e: Error| Error::Stage {
            stage: k,
            source: Box::new(e),
        };
        let mut srng = rng.substream(k as u64);
        let (stage, report, lat) = if i == 0 {
            train_first(spec, data, k, &mut srng).map_err(tag)?
        } else {
            let prev = &latents[i - 1];
            let input = if options.resample_latents {
                TrainingData::Resampled(&prev.posterior)
            } else {
                TrainingData::Fixed(&prev.samples)
            };
            train_gaussian(spec, input, &prev.samples, k, &mut srng).map_err(tag)?
        };
        stages.push(stage);
        reports.push(report);
        latents.push(lat);
    }
    Ok(Cascade {
        stages,
        latents,
        reports,
        seed: rng.seed(),
    })
}

type Trained<T> = (Stage<T>, StageReport, LatentDataset<T>);

fn train_first<T: Scalar>(
    spec: &StageSpec,
    data: CascadeData<'_, T>,
    k: usize,
    rng: &mut Rng,
) -> Result<Trained<T>> {
    match data {
        CascadeData::Vectors(x) => train_gaussian(spec, TrainingData::Fixed(x), x, k, rng),
        CascadeData::Sequences { vocab, seqs } => {
            let mut model = SeqVaeModel::new(vocab.clone(), spec.seq_config(), rng)?;
            let rep = seqvae::train_seqvae(&mut model, seqs, &spec.seq_train_config(), rng)?;
            let lat = extract_sequence_latents(&model, seqs, k, rng)?;
            let report = StageReport {
                loss_trace: rep.loss_trace,
                final_gamma: None,
            };
            Ok((Stage::Sequence(model), report, lat))
        }
    }
}

fn train_gaussian<T: Scalar>(
    spec: &StageSpec,
    data: TrainingData<'_, T>,
    inputs: &Tensor<T>,
    k: usize,
    rng: &mut Rng,
) -> Result<Trained<T>> {
    let mut model = VaeModel::new(inputs.dims2()?.1, spec.latent_dim, &spec.hidden, rng)?;
    let rep = vae::train_stage_on(&mut model, data, &spec.train_config(), rng)?;
    let lat = extract_latents(&model, inputs, k, rng)?;
    let report = StageReport {
        loss_trace: rep.loss_trace,
        final_gamma: rep.final_gamma,
    };
    Ok((Stage::Gaussian(model), report, lat))
}

impl<T: Scalar> Cascade<T> {
    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    /// Data width of a vector cascade.
    pub fn data_dim(&self) -> Option<usize> {
        self.stages.first().and_then(Stage::input_dim)
    }

    fn check_depth(&self, depth: usize) -> Result<()> {
        if depth == 0 || depth > self.depth() {
            return Err(Error::InvalidArgument(format!(
                "depth {depth} outside 1..={}",
                self.depth()
            )));
        }
        Ok(())
    }

    /// Latent codes handed to stage 1 when sampling through the first `depth`
    /// stages: `N(0, I)` draws for depth 1, decoded prior draws otherwise.
    pub fn sample_latents(
        &self,
        n: usize,
        depth: usize,
        rng: &mut Rng,
        options: &SampleOptions,
    ) -> Result<Tensor<T>> {
        self.check_depth(depth)?;
        let mut z: Tensor<T> = rng.normal_tensor([n, self.stages[depth - 1].latent_dim()]);
        for stage in self.stages[1..depth].iter().rev() {
            let Stage::Gaussian(m) = stage else {
                return Err(Error::InvalidArgument(
                    "stages after the first must be Gaussian".into(),
                ));
            };
            z = if options.intermediate_noise {
                m.decode_sample(&z, rng)?
            } else {
                m.decode_mean(&z)?
            };
        }
        Ok(z)
    }

    /// `n` samples through the first `depth` stages.
    pub fn sample_chain(
        &self,
        n: usize,
        depth: usize,
        rng: &mut Rng,
        options: &SampleOptions,
    ) -> Result<ChainSamples<T>> {
        let z = self.sample_latents(n, depth, rng, options)?;
        self.decode_latents(&z, rng, options)
    }

    /// Stage-1 decoding of latent rows: decoder means for vectors,
    /// autoregressive sampling for sequences.
    pub fn decode_latents(
        &self,
        z: &Tensor<T>,
        rng: &mut Rng,
        options: &SampleOptions,
    ) -> Result<ChainSamples<T>> {
        let n = z.dims2()?.0;
        match &self.stages[0] {
            Stage::Gaussian(m) => Ok(ChainSamples::Vectors(m.decode_mean(z)?)),
            Stage::Sequence(m) => {
                let max_len = m.config.max_len;
                let mut out = Vec::with_capacity(n);
                for start in (0..n).step_by(256) {
                    let rows: Vec<usize> = (start..(start + 256).min(n)).collect();
                    let zb = z.select_rows(&rows)?;
                    for toks in m.sample_tokens(&zb, rng, options.decode_mode, max_len)? {
                        out.push(m.vocab.decode(&toks));
                    }
                }
                Ok(ChainSamples::Sequences(out))
            }
        }
    }

    /// Writes `cascade.toml` plus one checkpoint and one latent file per stage.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut index = CascadeManifest {
            format: checkpoint::FORMAT.into(),
            version: checkpoint::VERSION,
            seed: self.seed,
            stages: Vec::new(),
        };
        for (i, (stage, lat)) in self.stages.iter().zip(&self.latents).enumerate() {
            let k = i + 1;
            let ck = match stage {
                Stage::Gaussian(m) => checkpoint::vae_checkpoint(m, self.seed),
                Stage::Sequence(m) => checkpoint::seqvae_checkpoint(m, self.seed),
            };
            let stem = format!("stage{k}");
            ck.save(dir, &stem)?;
            let lat_stem = format!("latents{k}");
            Checkpoint::new(
                checkpoint::LATENTS_KIND,
                lat.seed,
                toml::Table::new(),
                [
                    ("samples".to_string(), &lat.samples),
                    ("mu".to_string(), &lat.posterior.mu),
                    ("logvar".to_string(), &lat.posterior.logvar),
                ],
            )
            .save(dir, &lat_stem)?;
            index.stages.push(StageEntry {
                index: k,
                kind: stage.kind(),
                input_dim: stage.input_dim(),
                latent_dim: stage.latent_dim(),
                checkpoint: format!("{stem}.toml"),
                latents: format!("{lat_stem}.toml"),
            });
        }
        let text = toml::to_string(&index).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(dir.join(CASCADE_MANIFEST), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(CASCADE_MANIFEST))?;
        let index: CascadeManifest =
            toml::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if index.stages.is_empty() {
            return Err(Error::Checkpoint("cascade manifest lists no stages".into()));
        }
        let mut stages = Vec::new();
        let mut latents = Vec::new();
        for entry in &index.stages {
            let stem = |f: &str| f.trim_end_matches(".toml").to_string();
            let ck = Checkpoint::load(dir, &stem(&entry.checkpoint))?;
            stages.push(match entry.kind {
                HeadKind::Gaussian => Stage::Gaussian(checkpoint::vae_from_checkpoint(&ck)?),
                HeadKind::Categorical => Stage::Sequence(checkpoint::seqvae_from_checkpoint(&ck)?),
            });
            let lk = Checkpoint::load(dir, &stem(&entry.latents))?;
            latents.push(LatentDataset {
                stage: entry.index,
                seed: lk.manifest.seed,
                samples: lk.tensor("samples")?.cast(),
                posterior: GaussianPosterior::new(
                    lk.tensor("mu")?.cast(),
                    lk.tensor("logvar")?.cast(),
                )?,
            });
        }
        for w in stages.windows(2) {
            if w[1].input_dim() != Some(w[0].latent_dim()) {
                return Err(Error::Checkpoint(
                    "stored stages are not dimension-compatible".into(),
                ));
            }
        }
        Ok(Self {
            stages,
            latents,
            reports: vec![StageReport::default(); index.stages.len()],
            seed: index.seed,
        })
    }
}

pub const CASCADE_MANIFEST: &str = "cascade.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CascadeManifest {
    format: String,
    version: u32,
    seed: u64,
    stages: Vec<StageEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StageEntry {
    index: usize,
    kind: HeadKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_dim: Option<usize>,
    latent_dim: usize,
    checkpoint: String,
    latents: String,
}
