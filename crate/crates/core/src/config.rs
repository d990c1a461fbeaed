//! The analytics section of the operator configuration file (TOML).
//!
//! Every section has a default, so an empty file is valid; unknown keys are
//! rejected. Training sections must be given in full.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activity::{ActivityFeatureConfig, DEFAULT_MIN_PROMINENCE};
use crate::auth::{AuthConfig, SecurityConfig};
use crate::error::{Error, Result};
use crate::events::EventConfig;
use crate::models::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivitySection {
    pub features: ActivityFeatureConfig,
    pub min_prominence: f64,
    pub train: TrainConfig,
}

impl Default for ActivitySection {
    fn default() -> Self {
        Self {
            features: ActivityFeatureConfig::default(),
            min_prominence: DEFAULT_MIN_PROMINENCE,
            train: TrainConfig::gmm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub activity: ActivitySection,
    pub events: EventConfig,
    pub shock_train: TrainConfig,
    pub auth: AuthConfig,
    pub security: SecurityConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            activity: ActivitySection::default(),
            events: EventConfig::default(),
            shock_train: TrainConfig::mlp(),
            auth: AuthConfig::default(),
            security: SecurityConfig::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.activity.train.validate()?;
        self.shock_train.validate()?;
        self.auth.train.validate()?;
        self.events.validate()?;
        let f = &self.activity.features;
        if !(f.cutoff_hz > 0.0 && f.window_s > 0.0 && f.instance_s >= f.window_s) {
            return Err(Error::Parameter(
                "activity cutoff and window lengths must be positive".into(),
            ));
        }
        if !(self.activity.min_prominence >= 0.0) {
            return Err(Error::Parameter("min_prominence must be non-negative".into()));
        }
        if !(self.auth.window_s > 0.0) || self.auth.vote_windows == 0 {
            return Err(Error::Parameter(
                "auth window and voting period must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn round_trip_and_overrides() {
        let text = Config::default().to_toml();
        assert_eq!(Config::from_toml(&text).unwrap(), Config::default());
        let c = Config::from_toml("[events]\nquiet_duration = 6.0\n").unwrap();
        assert_eq!(c.events.quiet_duration, 6.0);
        assert_eq!(c.events.freefall_threshold, 0.3);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(Config::from_toml("[events]\nbogus = 1\n").is_err());
        assert!(Config::from_toml("[events]\nfreefall_threshold = 2.0\n").is_err());
    }
}
