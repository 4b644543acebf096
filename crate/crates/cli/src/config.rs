//! Run configuration file.

use std::path::{Path, PathBuf};

use grainfield::design::DesignOptions;
use grainfield::model::PriorConfig;
use grainfield::sampler::ChainConfig;
use grainfield::synth::SynthSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Parameter count for the adjusted R²; defaults to G + dim β + dim γ.
    pub p_effective: Option<usize>,
    pub bins: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            p_effective: None,
            bins: 8,
        }
    }
}

/// Everything a run needs. The top-level `seed` overrides the seeds inside
/// `synth` and `chain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: usize,
    /// Mesh file; `simulate` generates one from `synth` when absent.
    pub mesh: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub synth: SynthSpec,
    pub design: DesignOptions,
    pub priors: PriorConfig,
    pub chain: ChainConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            threads: 1,
            mesh: None,
            observations: None,
            out: None,
            synth: SynthSpec::default(),
            design: DesignOptions::default(),
            priors: PriorConfig::default(),
            chain: ChainConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Read a config file, resolve relative paths against its directory and
    /// apply overrides.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                let mut cfg: Self = toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new("."));
                for slot in [&mut cfg.mesh, &mut cfg.observations, &mut cfg.out] {
                    if let Some(rel) = slot.as_ref().filter(|r| r.is_relative()) {
                        *slot = Some(base.join(rel));
                    }
                }
                cfg
            }
        };
        if let Some(s) = ov.seed {
            cfg.seed = Some(s);
        }
        if let Some(t) = ov.threads {
            cfg.threads = t;
        }
        if let Some(o) = &ov.out {
            cfg.out = Some(o.clone());
        }
        if cfg.threads == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if let Some(s) = cfg.seed {
            cfg.synth.seed = s;
            cfg.chain.seed = s;
        }
        cfg.priors.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.chain.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required (--seed or `seed` in the config)".into()))
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("an output directory is required (--out or `out`)".into()))
    }

    pub fn existing(&self, slot: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
        let p = slot
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("config has no `{what}` path")))?;
        if !p.is_file() {
            return Err(CliError::Config(format!("{what} file {} does not exist", p.display())));
        }
        Ok(p.clone())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// SHA-256 of the model-relevant settings. Paths and the thread count
    /// are excluded so that moving a run or changing parallelism keeps the
    /// hash.
    pub fn hash(&self) -> String {
        let canonical = Self {
            mesh: None,
            observations: None,
            out: None,
            threads: 1,
            ..self.clone()
        };
        sha256_hex(canonical.to_toml().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
