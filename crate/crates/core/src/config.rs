//! The run configuration: one TOML file with a section per stage.
//!
//! ```toml
//! seed = 7
//!
//! [walk]
//! restart_prob = 0.5
//!
//! [model.encoder]
//! embed_dim = 32
//! ```
//!
//! Every section and key is optional and unknown keys are rejected. The
//! top-level `seed` is the only source of randomness: it is copied into the
//! generator, the walker and the split, and drives initialisation and
//! shuffling, so sections may not carry seeds of their own.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::{ModelConfig, TrainConfig};
use crate::dataset::ObservationConfig;
use crate::encoder::PretrainConfig;
use crate::error::{Error, Result};
use crate::sampler::WalkConfig;
use crate::synth::SynthConfig;

/// Where each stage reads and writes, relative to the output directory
/// unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub neighbor_sets: PathBuf,
    pub embeddings: PathBuf,
    /// Model parameters after skip-gram pretraining; used as a warm start
    /// by `train` when present.
    pub pretrained: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            nodes: "nodes.jsonl".into(),
            edges: "edges.jsonl".into(),
            neighbor_sets: "neighbor_sets.bin".into(),
            embeddings: "embeddings.bin".into(),
            pretrained: "pretrained.ckpt".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub walk: WalkConfig,
    pub observation: ObservationConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

const SEEDED_SECTIONS: [&str; 3] = ["synth", "walk", "observation"];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for section in SEEDED_SECTIONS {
            if let Some(toml::Value::Table(t)) = table.get(section) {
                if t.contains_key("seed") {
                    return Err(Error::Config(format!(
                        "[{section}] may not set `seed`; use the top-level seed"
                    )));
                }
            }
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.walk.seed = seed;
        self.observation.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.walk.validate()?;
        self.observation.validate()?;
        self.model.validate()?;
        self.train.validate()
    }

    /// The effective configuration, with the derived section seeds left out.
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("configuration serialises");
        for section in SEEDED_SECTIONS {
            if let Some(toml::Value::Table(t)) = table.get_mut(section) {
                t.remove("seed");
            }
        }
        toml::to_string(&table).expect("configuration serialises")
    }

    /// `path` if absolute, else `dir/path`.
    pub fn resolve(dir: &Path, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            dir.join(path)
        }
    }
}
