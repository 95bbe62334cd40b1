use std::collections::HashSet;
use std::path::{Path, PathBuf};

use latent_cascade::cascade::{
    validate_specs, CascadeOptions, HeadKind, SampleOptions, SequenceOptions, StageSpec,
};
use latent_cascade::manifold::SphereDatasetSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Sphere,
    Smiles,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Training corpus, one SMILES per line. The bundled toy corpus is used
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Reference set for evaluation; defaults to the training corpus.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Prefix length for unique@k.
    pub k: usize,
    /// Distance to the unit sphere counted as recovered.
    pub eps: f64,
    pub bins: usize,
    /// Samples drawn per depth in the sphere experiment.
    pub n_samples: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            k: 1000,
            eps: 0.05,
            bins: 40,
            n_samples: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Worker threads for per-seed runs; `LATENT_CASCADE_THREADS` caps it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Stage specs, data-facing first. Empty means the defaults of `kind`.
    pub stages: Vec<StageSpec>,
    pub sphere: SphereDatasetSpec,
    pub data: DataConfig,
    pub metrics: MetricConfig,
    pub cascade: CascadeOptions,
    pub sampling: SampleOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Sphere,
            seeds: (1..=6).collect(),
            out: PathBuf::from("runs"),
            threads: None,
            stages: Vec::new(),
            sphere: SphereDatasetSpec::default(),
            data: DataConfig::default(),
            metrics: MetricConfig::default(),
            cascade: CascadeOptions::default(),
            sampling: SampleOptions::default(),
        }
    }
}

/// Three identical Gaussian stages for the sphere experiment.
pub fn default_sphere_stages() -> Vec<StageSpec> {
    let stage = StageSpec {
        head: HeadKind::Gaussian,
        latent_dim: 4,
        hidden: vec![64, 64],
        epochs: 60,
        batch_size: 100,
        beta: 1.0,
        lr: 3e-3,
        sequence: SequenceOptions::default(),
    };
    vec![stage; 3]
}

/// A GRU sequence VAE followed by one Gaussian stage on its latents.
pub fn default_smiles_stages() -> Vec<StageSpec> {
    vec![
        StageSpec {
            head: HeadKind::Categorical,
            latent_dim: 16,
            hidden: vec![64],
            epochs: 30,
            batch_size: 32,
            beta: 0.1,
            lr: 3e-3,
            sequence: SequenceOptions::default(),
        },
        StageSpec {
            head: HeadKind::Gaussian,
            latent_dim: 16,
            hidden: vec![64, 64],
            epochs: 60,
            batch_size: 50,
            beta: 1.0,
            lr: 3e-3,
            sequence: SequenceOptions::default(),
        },
    ]
}

impl RunConfig {
    pub fn defaults_for(kind: ExperimentKind) -> Self {
        let mut c = Self {
            kind,
            ..Self::default()
        };
        c.fill_defaults();
        c
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let mut c: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.fill_defaults();
        Ok(c)
    }

    fn fill_defaults(&mut self) {
        if self.stages.is_empty() {
            self.stages = match self.kind {
                ExperimentKind::Sphere => default_sphere_stages(),
                ExperimentKind::Smiles => default_smiles_stages(),
            };
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(CliError::Config(format!(
                "seeds must be distinct: {:?}",
                self.seeds
            )));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        let first = match self.kind {
            ExperimentKind::Sphere => HeadKind::Gaussian,
            ExperimentKind::Smiles => HeadKind::Categorical,
        };
        validate_specs(&self.stages, first).map_err(|e| CliError::Config(e.to_string()))?;
        if self.kind == ExperimentKind::Sphere {
            self.sphere
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        for p in [&self.data.corpus, &self.data.reference]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(CliError::Config(format!("{} does not exist", p.display())));
            }
        }
        let m = &self.metrics;
        if m.k == 0 || m.bins == 0 || m.n_samples == 0 {
            return Err(CliError::Config(
                "metrics k, bins and n_samples must be positive".into(),
            ));
        }
        if !(m.eps >= 0.0 && m.eps.is_finite()) {
            return Err(CliError::Config(format!("eps {} out of range", m.eps)));
        }
        Ok(())
    }

    /// The effective configuration as a TOML table, for run manifests.
    pub fn snapshot(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_sphere_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.kind, ExperimentKind::Sphere);
        assert_eq!(c.stages.len(), 3);
        assert_eq!(c.sphere.ambient_dim, 17);
        c.validate().unwrap();
    }

    #[test]
    fn smiles_overrides() {
        let c = RunConfig::from_toml(
            "kind = \"smiles\"\nseeds = [3]\n[metrics]\nk = 50\n[[stages]]\nhead = \"categorical\"\nlatent_dim = 8\nhidden = [32]\n",
        )
        .unwrap();
        assert_eq!(c.stages.len(), 1);
        assert_eq!(c.metrics.k, 50);
        c.validate().unwrap();
    }

    #[test]
    fn validation_failures() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        let mut c = RunConfig::default();
        c.fill_defaults();
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
        c.seeds = vec![];
        assert!(c.validate().is_err());
        c.seeds = vec![1];
        c.stages[1].latent_dim = 5;
        assert!(c.validate().is_err());
        let mut c = RunConfig::defaults_for(ExperimentKind::Smiles);
        c.data.corpus = Some("/no/such/file.smi".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig::defaults_for(ExperimentKind::Smiles);
        let text = toml::to_string(&c.snapshot()).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }
}
