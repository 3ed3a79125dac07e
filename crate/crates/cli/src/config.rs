//! JSON experiment configs.
//!
//! ```json
//! {
//!   "horizon": 2000,
//!   "replicates": 50,
//!   "seed": 7,
//!   "horizons": [500, 1000, 2000],
//!   "strict_protocol": false,
//!   "out": "results",
//!   "svg": true,
//!   "runs": [
//!     { "env": { "preset": "benign", "actions": 10 },
//!       "policies": ["ucb", "cucb", "hacucb"],
//!       "marginals": "perturbed:0.1" },
//!     { "env": { "preset": "worstcase", "actions": 2, "params": { "mu": [[0.1, 0.9], [0.2, 0.8]], "p": [0.7, 0.8] } } },
//!     { "env": { "file": "my_env.json" }, "policies": ["const:1", "uniform"] }
//!   ]
//! }
//! ```
//!
//! `env` is either a preset object (`benign`, `worstcase`, or `fixed` with an
//! inline `environment` document) or `{ "file": path }` naming an environment
//! JSON file, resolved relative to the config file. Every field except
//! `horizon` and `runs` is optional; `horizons` defaults to every round.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use causal_bandits::harness::EnvSpec;
use causal_bandits::Environment;
use serde::Deserialize;

fn default_replicates() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub horizons: Option<Vec<usize>>,
    #[serde(default)]
    pub strict_protocol: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub svg: bool,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub env: EnvEntry,
    #[serde(default)]
    pub policies: Option<Vec<String>>,
    #[serde(default)]
    pub marginals: Option<String>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub independent_seeds: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EnvEntry {
    File { file: PathBuf },
    Spec(EnvSpec),
}

impl EnvEntry {
    /// Resolves file references relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<(EnvSpec, String)> {
        match self {
            EnvEntry::Spec(spec) => Ok((spec.clone(), spec.name())),
            EnvEntry::File { file } => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading environment {}", path.display()))?;
                let environment = Environment::from_json(&text)
                    .with_context(|| format!("parsing environment {}", path.display()))?;
                let name = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "custom".into());
                Ok((EnvSpec::Fixed { environment }, name))
            }
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.runs.is_empty() {
            bail!("config {} has no runs", path.display());
        }
        Ok(cfg)
    }
}
