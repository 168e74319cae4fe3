//! Every tunable of the pipeline in one place, loadable from TOML. Missing
//! tables and keys keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::LocalizationConfig;
use crate::mec_sim::SimConfig;
use crate::queueing::ServingSpec;
use crate::radio::RadioParams;
use crate::scenario::{ArenaConfig, GenerationParams, TaskProfile};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub arena: ArenaConfig,
    pub task: TaskProfile,
    pub generation: GenerationParams,
    pub radio: RadioParams,
    pub serving: ServingSpec,
    pub localization: LocalizationConfig,
    pub simulation: SimConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|message| Error::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.arena.validate().map_err(|e| e.to_string())?;
        self.task.validate().map_err(|e| e.to_string())?;
        let positive = [
            ("radio.channel_power_gain", self.radio.channel_power_gain),
            ("radio.data_rate", self.radio.data_rate),
            ("radio.rssi_reward_scale", self.radio.rssi_reward_scale),
            ("serving.capacity", self.serving.capacity),
            ("simulation.duration", self.simulation.duration),
            ("localization.step_distance", self.localization.step_distance),
            ("localization.train.learning_rate", self.localization.train.learning_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        let t = &self.localization.train;
        if !(0.0..=1.0).contains(&t.discount) {
            return Err(format!("localization.train.discount must be in [0, 1], got {}", t.discount));
        }
        for (name, v) in [
            ("epsilon_start", t.epsilon_start),
            ("epsilon_min", t.epsilon_min),
            ("epsilon_decay", t.epsilon_decay),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("localization.train.{name} must be in [0, 1], got {v}"));
            }
        }
        if t.batch_size == 0 || t.replay_capacity < t.batch_size {
            return Err("localization.train needs 0 < batch_size <= replay_capacity".into());
        }
        if self.localization.threshold == 0 {
            return Err("localization.threshold must be at least 1".into());
        }
        if self.localization.episode_length == 0 {
            return Err("localization.episode_length must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_override() {
        let cfg = PipelineConfig::from_toml(
            "[serving]\ncapacity = 6e8\n[localization.train]\nlearning_rate = 0.0005\n",
        )
        .unwrap();
        assert_eq!(cfg.serving.capacity, 6e8);
        assert_eq!(cfg.localization.train.learning_rate, 0.0005);
        assert_eq!(cfg.task, TaskProfile::default());
        assert_eq!(cfg.localization.train.batch_size, 64);
    }

    #[test]
    fn round_trip_and_rejections() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(PipelineConfig::from_toml("[serving]\ncapacity = -1.0\n").is_err());
        assert!(PipelineConfig::from_toml("[nonsense]\nx = 1\n").is_err());
    }
}
