use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, TrainError};
use crate::temporal::ModelConfig;

/// Version of the training-config file layout.
pub const CONFIG_VERSION: u32 = 1;

/// Training run settings, readable from a TOML file.
///
/// ```toml
/// version = 1
/// learning_rate = 0.001
/// epochs = 150
/// batch_size = 32
/// seed = 0
///
/// [adam]
/// beta1 = 0.9
///
/// [model]
/// layers = 2
/// hidden = 128
/// attention = "softmax"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Deployments per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            learning_rate: 1e-3,
            epochs: 150,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let config: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.version != CONFIG_VERSION {
            return Err(TrainError::Version {
                what: "config",
                found: self.version,
                expected: CONFIG_VERSION,
            });
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0 && a.weight_decay >= 0.0) {
            return Err(TrainError::Config("adam: betas in [0, 1), eps > 0, weight_decay >= 0".into()));
        }
        self.model.validate().map_err(|e| TrainError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::htl::AttentionMode;

    #[test]
    fn defaults_match_training_protocol() {
        let c = TrainConfig::default();
        assert_eq!((c.learning_rate, c.epochs, c.batch_size), (1e-3, 150, 32));
        assert_eq!((c.adam.beta1, c.adam.beta2, c.adam.eps), (0.9, 0.999, 1e-8));
        assert_eq!((c.model.layers, c.model.hidden), (2, 128));
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = TrainConfig {
            epochs: 7,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = TrainConfig::from_toml("version = 1\nepochs = 3\n[model]\nattention = \"raw\"\n").unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.model.attention, AttentionMode::Raw);
        assert_eq!(partial.learning_rate, 1e-3);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            TrainConfig::from_toml("version = 2"),
            Err(TrainError::Version { found: 2, .. })
        ));
        assert!(TrainConfig::from_toml("version = 1\nlearnin_rate = 0.1").is_err());
        assert!(TrainConfig::from_toml("version = 1\nbatch_size = 0").is_err());
        assert!(TrainConfig::from_toml("version = 1\n[model]\ndropout = 0.5").is_err());
    }
}
