//! Operator configuration: the analytics sections shared with the core crate
//! plus the monitor rules, network settings and registered devices.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use activitymon_core::auth::{AuthConfig, SecurityConfig};
use activitymon_core::config::ActivitySection;
use activitymon_core::{Config, DetectionMode, EventConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

/// What a device is allowed to expose beyond its activity level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrivacyMode {
    #[default]
    Full,
    /// Activity level only: no class, no identity.
    Coarse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    /// Static shared secret presented with every ingest.
    pub token: String,
    #[serde(default)]
    pub privacy: PrivacyMode,
    /// Enrolled user expected to carry the device; enables identity checks.
    #[serde(default)]
    pub owner: Option<String>,
}

/// Thresholds of the server-side alert rules. All are inventions; none has a
/// published value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// Cadence of rule evaluation (stream seconds).
    pub tick_s: f64,
    /// Mean activity level (g) that counts as high.
    pub high_activity_level: f64,
    /// How long the level must stay high before alerting.
    pub high_activity_s: f64,
    /// Mean high-passed magnitude (g) below which the device counts as idle.
    pub idle_magnitude: f64,
    pub idle_timeout_s: f64,
    /// Trailing period over which the share of active instances is measured.
    pub low_activity_window_s: f64,
    /// Share of walking or running instances below which activity is low.
    pub low_activity_fraction: f64,
    /// Stream-time gap after which the pipeline restarts from scratch.
    pub gap_limit_s: f64,
    /// kcal per g·s of activity level. Indicative only.
    pub kcal_per_g_s: f64,
    pub detection_mode: DetectionMode,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            tick_s: 2.0,
            high_activity_level: 0.6,
            high_activity_s: 30.0,
            idle_magnitude: 0.02,
            idle_timeout_s: 1800.0,
            low_activity_window_s: 3600.0,
            low_activity_fraction: 0.05,
            gap_limit_s: 5.0,
            kcal_per_g_s: 0.1,
            detection_mode: DetectionMode::ThreeStep,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> ServiceResult<()> {
        let positive = [
            ("tick_s", self.tick_s),
            ("high_activity_level", self.high_activity_level),
            ("high_activity_s", self.high_activity_s),
            ("idle_magnitude", self.idle_magnitude),
            ("idle_timeout_s", self.idle_timeout_s),
            ("low_activity_window_s", self.low_activity_window_s),
            ("gap_limit_s", self.gap_limit_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ServiceError::Config(format!(
                    "monitor.{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.low_activity_fraction) {
            return Err(ServiceError::Config(
                "monitor.low_activity_fraction must lie in [0, 1]".into(),
            ));
        }
        if !(self.kcal_per_g_s >= 0.0 && self.kcal_per_g_s.is_finite()) {
            return Err(ServiceError::Config("monitor.kcal_per_g_s must be non-negative".into()));
        }
        Ok(())
    }
}

/// Where the server listens and keeps its files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub http_addr: SocketAddr,
    pub ingest_addr: SocketAddr,
    pub data_dir: PathBuf,
    /// Log entries between index checkpoints.
    pub checkpoint_every: usize,
    pub activity_models: Option<PathBuf>,
    pub shock_model: Option<PathBuf>,
    pub identifier: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            http_addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            ingest_addr: SocketAddr::from(([127, 0, 0, 1], 7070)),
            data_dir: PathBuf::from("activitymon-data"),
            checkpoint_every: 256,
            activity_models: None,
            shock_model: None,
            identifier: None,
        }
    }
}

/// The whole operator configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub activity: ActivitySection,
    pub events: EventConfig,
    pub shock_train: TrainConfig,
    pub auth: AuthConfig,
    pub security: SecurityConfig,
    pub monitor: MonitorConfig,
    pub service: ServiceSection,
    pub devices: BTreeMap<String, DeviceConfig>,
}

impl Default for AppConfig {
    fn default() -> Self {
        let core = Config::default();
        Self {
            activity: core.activity,
            events: core.events,
            shock_train: core.shock_train,
            auth: core.auth,
            security: core.security,
            monitor: MonitorConfig::default(),
            service: ServiceSection::default(),
            devices: BTreeMap::new(),
        }
    }
}

impl AppConfig {
    /// The analytics part, as the core crate sees it.
    pub fn analytics(&self) -> Config {
        Config {
            activity: self.activity.clone(),
            events: self.events.clone(),
            shock_train: self.shock_train.clone(),
            auth: self.auth.clone(),
            security: self.security.clone(),
        }
    }

    pub fn validate(&self) -> ServiceResult<()> {
        self.analytics().validate()?;
        self.monitor.validate()?;
        if self.service.checkpoint_every == 0 {
            return Err(ServiceError::Config("service.checkpoint_every must be positive".into()));
        }
        for (id, d) in &self.devices {
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(ServiceError::Config(format!(
                    "device id {id:?} must be non-empty ASCII letters, digits, '-' or '_'"
                )));
            }
            if d.token.is_empty() {
                return Err(ServiceError::Config(format!("device {id} has an empty token")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> ServiceResult<Self> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration always serializes")
    }

    pub fn load(path: &Path) -> ServiceResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// The subset of settings that can be changed while the server runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSettings {
    pub monitor: MonitorConfig,
    pub security: SecurityConfig,
    /// Privacy mode per registered device.
    pub privacy: BTreeMap<String, PrivacyMode>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = AppConfig::from_toml("").unwrap();
        assert_eq!(cfg, AppConfig::default());
        assert_eq!(AppConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn devices_and_unknown_keys() {
        let cfg = AppConfig::from_toml(
            "[devices.phone-1]\ntoken = \"s3\"\nprivacy = \"coarse\"\n\n[monitor]\nidle_timeout_s = 60.0\n",
        )
        .unwrap();
        assert_eq!(cfg.devices["phone-1"].privacy, PrivacyMode::Coarse);
        assert_eq!(cfg.monitor.idle_timeout_s, 60.0);
        assert!(AppConfig::from_toml("[monitor]\nbogus = 1\n").is_err());
        assert!(AppConfig::from_toml("[devices.\"a b\"]\ntoken = \"x\"\n").is_err());
        assert!(AppConfig::from_toml("[monitor]\ntick_s = -1.0\n").is_err());
    }
}
