use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{load_profiles, shipped_profiles, DeviceProfile};
use crate::model::{ModelSpec, DEFAULT_CONTEXT_CAP};
use crate::pipeline::PipelineConfig;
use crate::specdec::DecodeMode;

/// Sweep configuration. Batch size is always 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub decode: DecodeSpec,
    pub gamma_list: Vec<usize>,
    #[serde(default)]
    pub device: DeviceRef,
    /// Profile file used to resolve a named device; shipped profiles otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<PathBuf>,
    /// Verification-unit model whose statistics are attached to each row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSpec {
    pub mode: DecodeMode,
    pub max_new_tokens: usize,
    pub prompt_len: usize,
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for DecodeSpec {
    fn default() -> Self {
        Self {
            mode: DecodeMode::Greedy,
            max_new_tokens: 256,
            prompt_len: 8,
            trials: 20,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceRef {
    Named(String),
    Inline(DeviceProfile),
}

impl Default for DeviceRef {
    fn default() -> Self {
        DeviceRef::Named("a100".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PipelineRef {
    Path(PathBuf),
    Inline(PipelineConfig),
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(json);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative `profiles` and pipeline paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = config.profiles.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(PipelineRef::Path(p)) = config.pipeline.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.vocab_size < 2 {
            return Err(Error::config("model.vocab_size", "must be >= 2"));
        }
        if !(0.0..=1.0).contains(&m.agreement) {
            return Err(Error::config(
                "model.agreement",
                format!("{} not in [0, 1]", m.agreement),
            ));
        }
        let contexts = u32::try_from(m.context_order)
            .ok()
            .and_then(|o| (m.vocab_size as u64).checked_pow(o));
        if contexts.is_none_or(|c| c > DEFAULT_CONTEXT_CAP) {
            return Err(Error::config(
                "model.context_order",
                format!(
                    "{}^{} contexts exceeds {DEFAULT_CONTEXT_CAP}",
                    m.vocab_size, m.context_order
                ),
            ));
        }
        let d = &self.decode;
        if d.max_new_tokens < 1 {
            return Err(Error::config("decode.max_new_tokens", "must be >= 1"));
        }
        if d.trials < 1 {
            return Err(Error::config("decode.trials", "must be >= 1"));
        }
        if d.prompt_len < m.context_order {
            return Err(Error::config(
                "decode.prompt_len",
                format!(
                    "{} is shorter than model.context_order {}",
                    d.prompt_len, m.context_order
                ),
            ));
        }
        if self.gamma_list.is_empty() {
            return Err(Error::config("gamma_list", "must not be empty"));
        }
        if let DeviceRef::Inline(p) = &self.device {
            p.validate()
                .map_err(|e| Error::config("device", e.to_string()))?;
        }
        if let Some(PipelineRef::Inline(p)) = &self.pipeline {
            p.validate()
                .map_err(|e| Error::config("pipeline", e.to_string()))?;
        }
        Ok(())
    }

    pub fn resolve_device(&self) -> Result<DeviceProfile> {
        match &self.device {
            DeviceRef::Inline(p) => Ok(p.clone()),
            DeviceRef::Named(name) => {
                let profiles = match &self.profiles {
                    Some(path) => load_profiles(path)?,
                    None => shipped_profiles(),
                };
                profiles
                    .into_iter()
                    .find(|p| &p.name == name)
                    .ok_or_else(|| Error::config("device", format!("no profile named '{name}'")))
            }
        }
    }

    pub fn resolve_pipeline(&self) -> Result<Option<PipelineConfig>> {
        match &self.pipeline {
            None => Ok(None),
            Some(PipelineRef::Inline(p)) => Ok(Some(p.clone())),
            Some(PipelineRef::Path(path)) => PipelineConfig::load(path).map(Some),
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
