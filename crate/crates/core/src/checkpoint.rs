//! On-disk model format: a TOML manifest plus a flat little-endian `f64` blob.
//!
//! The manifest records the model kind, seed, free-form hyperparameters, an
//! optional vocabulary and the name and shape of every tensor. The blob holds
//! the tensors back to back in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, Parameterized};
use crate::numcore::{Rng, Tensor};
use crate::scalar::Scalar;
use crate::seqvae::{SeqVaeConfig, SeqVaeModel, Vocab};
use crate::vae::{GaussianHead, VaeModel};

pub const FORMAT: &str = "latent-cascade-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub seed: u64,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    #[serde(default)]
    pub hyperparameters: toml::Table,
    /// Corpus tokens in index order (sequence models only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vec<String>>,
    pub tensors: Vec<TensorEntry>,
}

/// A manifest together with its tensors, held as `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: Vec<Tensor<f64>>,
}

fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{stem}.toml")),
        dir.join(format!("{stem}.bin")),
    )
}

impl Checkpoint {
    pub fn new<'a, T: Scalar>(
        kind: &str,
        seed: u64,
        hyperparameters: toml::Table,
        named: impl IntoIterator<Item = (String, &'a Tensor<T>)>,
    ) -> Self {
        let mut entries = Vec::new();
        let mut tensors = Vec::new();
        for (name, t) in named {
            entries.push(TensorEntry {
                name,
                shape: t.shape().to_vec(),
            });
            tensors.push(t.cast::<f64>());
        }
        Self {
            manifest: Manifest {
                format: FORMAT.into(),
                version: VERSION,
                kind: kind.into(),
                seed,
                blob: String::new(),
                hyperparameters,
                vocab: None,
                tensors: entries,
            },
            tensors,
        }
    }

    /// Writes `<stem>.toml` and `<stem>.bin` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let (toml_path, bin_path) = paths(dir, stem);
        let mut manifest = self.manifest.clone();
        manifest.blob = format!("{stem}.bin");
        let mut blob =
            Vec::with_capacity(8 * self.tensors.iter().map(Tensor::numel).sum::<usize>());
        for t in &self.tensors {
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let text = toml::to_string(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(&bin_path, blob)?;
        fs::write(&toml_path, text)?;
        Ok(toml_path)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let (toml_path, _) = paths(dir, stem);
        let text = fs::read_to_string(&toml_path)?;
        let manifest: Manifest = toml::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", toml_path.display())))?;
        if manifest.format != FORMAT || manifest.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} v{}",
                manifest.format, manifest.version
            )));
        }
        let bytes = fs::read(dir.join(&manifest.blob))?;
        let expected: usize = manifest
            .tensors
            .iter()
            .map(|e| e.shape.iter().product::<usize>())
            .sum();
        if bytes.len() != 8 * expected {
            return Err(Error::Checkpoint(format!(
                "blob holds {} bytes, manifest describes {} values",
                bytes.len(),
                expected
            )));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in &manifest.tensors {
            let n = e.shape.iter().product();
            tensors.push(Tensor::new(
                e.shape.clone(),
                values.by_ref().take(n).collect(),
            )?);
        }
        Ok(Self { manifest, tensors })
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<f64>> {
        self.manifest
            .tensors
            .iter()
            .position(|e| e.name == name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.manifest.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.manifest.kind
            )));
        }
        Ok(())
    }

    /// Copies the stored tensors into `model`, checking names and shapes.
    pub fn restore_into<T: Scalar, M: Parameterized<T>>(&self, model: &mut M) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = model
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if names.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} tensors, checkpoint {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), entry) in names.iter().zip(&self.manifest.tensors) {
            if *name != entry.name || *shape != entry.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} {shape:?} does not match stored {} {:?}",
                    entry.name, entry.shape
                )));
            }
        }
        for (dst, src) in model.params_mut().into_iter().zip(&self.tensors) {
            *dst = src.cast();
        }
        Ok(())
    }

    fn hyper_usize(&self, key: &str) -> Result<usize> {
        self.manifest
            .hyperparameters
            .get(key)
            .and_then(toml::Value::as_integer)
            .and_then(|v| usize::try_from(v).ok())
            .ok_or_else(|| Error::Checkpoint(format!("missing hyperparameter {key}")))
    }
}

fn dims_of<T: Scalar>(mlp: &Mlp<T>) -> toml::Value {
    toml::Value::Array(
        mlp.dims()
            .into_iter()
            .map(|d| toml::Value::Integer(d as i64))
            .collect(),
    )
}

pub const GAUSSIAN_KIND: &str = "gaussian_vae";
pub const SEQUENCE_KIND: &str = "sequence_vae";
pub const LATENTS_KIND: &str = "latents";

pub fn vae_checkpoint<T: Scalar>(model: &VaeModel<T>, seed: u64) -> Checkpoint {
    let mut hp = toml::Table::new();
    hp.insert("input_dim".into(), (model.input_dim() as i64).into());
    hp.insert("latent_dim".into(), (model.latent_dim() as i64).into());
    hp.insert("encoder_dims".into(), dims_of(&model.encoder));
    hp.insert("decoder_dims".into(), dims_of(&model.decoder));
    Checkpoint::new(GAUSSIAN_KIND, seed, hp, model.named_params())
}

pub fn vae_from_checkpoint<T: Scalar>(ck: &Checkpoint) -> Result<VaeModel<T>> {
    ck.expect_kind(GAUSSIAN_KIND)?;
    let dims = |key: &str| -> Result<Vec<usize>> {
        ck.manifest
            .hyperparameters
            .get(key)
            .and_then(toml::Value::as_array)
            .and_then(|a| {
                a.iter()
                    .map(|v| v.as_integer().and_then(|i| usize::try_from(i).ok()))
                    .collect::<Option<Vec<_>>>()
            })
            .ok_or_else(|| Error::Checkpoint(format!("missing hyperparameter {key}")))
    };
    let mut rng = Rng::new(0);
    let encoder = Mlp::new(&dims("encoder_dims")?, &mut rng)?;
    let decoder = Mlp::new(&dims("decoder_dims")?, &mut rng)?;
    let mut model = VaeModel::from_parts(encoder, decoder, GaussianHead::new(1.0))?;
    ck.restore_into(&mut model)?;
    Ok(model)
}

pub fn seqvae_checkpoint<T: Scalar>(model: &SeqVaeModel<T>, seed: u64) -> Checkpoint {
    let c = &model.config;
    let mut hp = toml::Table::new();
    for (k, v) in [
        ("embed_dim", c.embed_dim),
        ("hidden_dim", c.hidden_dim),
        ("latent_dim", c.latent_dim),
        ("decoder_layers", c.decoder_layers),
        ("max_len", c.max_len),
    ] {
        hp.insert(k.into(), (v as i64).into());
    }
    let mut ck = Checkpoint::new(SEQUENCE_KIND, seed, hp, model.named_params());
    ck.manifest.vocab = Some(model.vocab.corpus_tokens().to_vec());
    ck
}

pub fn seqvae_from_checkpoint<T: Scalar>(ck: &Checkpoint) -> Result<SeqVaeModel<T>> {
    ck.expect_kind(SEQUENCE_KIND)?;
    let tokens = ck
        .manifest
        .vocab
        .clone()
        .ok_or_else(|| Error::Checkpoint("sequence checkpoint without vocabulary".into()))?;
    let vocab = Vocab::from_tokens(tokens);
    let config = SeqVaeConfig {
        embed_dim: ck.hyper_usize("embed_dim")?,
        hidden_dim: ck.hyper_usize("hidden_dim")?,
        latent_dim: ck.hyper_usize("latent_dim")?,
        decoder_layers: ck.hyper_usize("decoder_layers")?,
        max_len: ck.hyper_usize("max_len")?,
    };
    let mut model = SeqVaeModel::new(vocab, config, &mut Rng::new(0))?;
    ck.restore_into(&mut model)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("lc-ckpt-{}-{name}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn vae_round_trip_is_bit_exact() {
        let mut rng = Rng::new(8);
        let mut m = VaeModel::<f64>::new(5, 2, &[7, 6], &mut rng).unwrap();
        m.head.log_gamma.data_mut()[0] = -3.3;
        m.encoder.layers[0].bias.data_mut()[1] = 1.0 / 3.0;
        let dir = tmp("vae");
        vae_checkpoint(&m, 8).save(&dir, "stage1").unwrap();
        let ck = Checkpoint::load(&dir, "stage1").unwrap();
        assert_eq!(ck.manifest.seed, 8);
        let back: VaeModel<f64> = vae_from_checkpoint(&ck).unwrap();
        for (a, b) in m.params().iter().zip(back.params()) {
            let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(m, back);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn seqvae_round_trip() {
        let vocab = Vocab::from_corpus(&["CCO", "c1ccccc1"]).unwrap();
        let cfg = SeqVaeConfig {
            embed_dim: 3,
            hidden_dim: 4,
            latent_dim: 2,
            decoder_layers: 2,
            max_len: 9,
        };
        let m = SeqVaeModel::<f64>::new(vocab, cfg, &mut Rng::new(2)).unwrap();
        let dir = tmp("seq");
        seqvae_checkpoint(&m, 2).save(&dir, "s").unwrap();
        let back: SeqVaeModel<f64> =
            seqvae_from_checkpoint(&Checkpoint::load(&dir, "s").unwrap()).unwrap();
        assert_eq!(m, back);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn corrupt_blob_rejected() {
        let m = VaeModel::<f64>::new(3, 1, &[2], &mut Rng::new(1)).unwrap();
        let dir = tmp("bad");
        vae_checkpoint(&m, 1).save(&dir, "m").unwrap();
        fs::write(dir.join("m.bin"), [0u8; 12]).unwrap();
        assert!(matches!(
            Checkpoint::load(&dir, "m"),
            Err(Error::Checkpoint(_))
        ));
        let ck = vae_checkpoint(&m, 1);
        assert!(seqvae_from_checkpoint::<f64>(&ck).is_err());
        let _ = fs::remove_dir_all(&dir);
    }
}
