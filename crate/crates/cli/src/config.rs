//! Resolved run configurations. Each command merges built-in defaults, an
//! optional `--config` JSON file and explicit flags (flags win), then writes
//! the result next to its outputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vad_core::eval::GroupBy;
use vad_core::meta::MetaConfig;
use vad_core::scoring::DEFAULT_THRESHOLD;
use vad_core::{LossConfig, Polarity, PredictorConfig, Protocol, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Seeds model initialization, the episode sampler and (unless
    /// `split_seed` is set) the protocol split.
    pub seed: u64,
    pub split_seed: Option<u64>,
    pub protocol: Protocol,
    pub predictor: PredictorConfig,
    pub meta: MetaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            split_seed: None,
            protocol: Protocol::ProtocolI,
            predictor: PredictorConfig::default(),
            meta: MetaConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub k_shot: usize,
    pub inner_lr: f64,
    pub inner_steps: usize,
    pub loss: LossConfig,
    pub threshold: f64,
    pub no_adapt: bool,
    pub full_length: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self::from_meta(&MetaConfig::default())
    }
}

impl AdaptConfig {
    pub fn from_meta(meta: &MetaConfig) -> Self {
        Self {
            k_shot: meta.k_shot,
            inner_lr: meta.inner_lr,
            inner_steps: meta.inner_steps,
            loss: meta.loss.clone(),
            threshold: DEFAULT_THRESHOLD,
            no_adapt: false,
            full_length: false,
        }
    }

    /// Adaptation settings as a [`MetaConfig`]; `--no-adapt` forces a zero
    /// inner learning rate.
    pub fn meta(&self) -> MetaConfig {
        MetaConfig {
            k_shot: self.k_shot,
            inner_lr: if self.no_adapt { 0.0 } else { self.inner_lr },
            inner_steps: self.inner_steps,
            loss: self.loss.clone(),
            ..MetaConfig::default()
        }
    }

    /// Reads either an adaptation config or a training snapshot, whose
    /// `meta` section supplies the adaptation settings.
    pub fn read(path: &Path) -> Result<Self> {
        let value = read_json(path)?;
        if value.get("meta").is_some() {
            let train: TrainConfig = serde_json::from_value(value)?;
            return Ok(Self::from_meta(&train.meta));
        }
        Ok(serde_json::from_value(value)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub polarity: Polarity,
    pub group_by: GroupBy,
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            polarity: Polarity::Normalcy,
            group_by: GroupBy::AnomalyType,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

pub fn read_json(path: &Path) -> Result<Value> {
    if !path.exists() {
        return Err(vad_core::Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_value(read_json(p)?)?),
        None => Ok(T::default()),
    }
}

pub fn write_snapshot<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
