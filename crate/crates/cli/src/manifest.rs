use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    /// Seed directory, relative to the run directory.
    pub dir: String,
    /// Stage checkpoint manifests, relative to the run directory.
    pub checkpoints: Vec<String>,
    /// Every file written for this seed, relative to the run directory.
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
    #[serde(default)]
    pub run_files: Vec<String>,
    pub seeds: Vec<SeedEntry>,
    pub config: RunConfig,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn write(&self, run_dir: &Path) -> Result<PathBuf, CliError> {
        for f in self
            .run_files
            .iter()
            .chain(self.seeds.iter().flat_map(|s| s.files.iter()))
        {
            if !run_dir.join(f).is_file() {
                return Err(CliError::Runtime(format!("listed output {f} is missing")));
            }
        }
        let path = run_dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(run_dir: &Path) -> Result<Self, CliError> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Looks for a run manifest in `dir` and its parent.
    pub fn find_near(dir: &Path) -> Option<(PathBuf, Self)> {
        let mut cur = Some(dir);
        for _ in 0..2 {
            let d = cur?;
            if d.join(MANIFEST_FILE).is_file() {
                if let Ok(m) = Self::read(d) {
                    return Some((d.to_path_buf(), m));
                }
            }
            cur = d.parent();
        }
        None
    }
}
