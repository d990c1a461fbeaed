//! What a device pipeline emits. One [`LogEntry`] is one line of the device
//! log; its serialization is the byte-level replay contract.

use activitymon_core::{ActivityClass, AuthDecision, RiskyAlarm, SecurityLevel};
use serde::{Deserialize, Serialize};

/// Marker attached to every calorie figure.
pub const CALORIE_NOTE: &str = "indicative only";

/// Identity summary attached to history records of full-privacy devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthSummary {
    /// Latest voted decision, if a voting period has completed.
    pub voted: Option<AuthDecision>,
    pub level: SecurityLevel,
    /// Per-window decisions made during the instance.
    pub windows: usize,
}

/// One activity instance of a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub device_id: String,
    pub t_start: f64,
    pub t: f64,
    /// Mean peak-to-valley level over the instance (g).
    pub level: f64,
    pub class: Option<ActivityClass>,
    pub auth: Option<AuthSummary>,
    pub kcal_indicative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlertKind {
    RiskyEvent,
    HighActivity,
    LowActivity,
    IdleTimeout,
    AuthLocked,
}

impl AlertKind {
    pub const ALL: [AlertKind; 5] = [
        AlertKind::RiskyEvent,
        AlertKind::HighActivity,
        AlertKind::LowActivity,
        AlertKind::IdleTimeout,
        AlertKind::AuthLocked,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlertKind::RiskyEvent => "risky-event",
            AlertKind::HighActivity => "high-activity",
            AlertKind::LowActivity => "low-activity",
            AlertKind::IdleTimeout => "idle-timeout",
            AlertKind::AuthLocked => "auth-locked",
        }
    }
}

impl std::str::FromStr for AlertKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlertKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown alert kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlertPayload {
    RiskyEvent(RiskyAlarm),
    HighActivity { mean_level: f64, over_s: f64 },
    LowActivity { active_fraction: f64, over_s: f64 },
    IdleTimeout { idle_since: f64 },
    AuthLocked { user_id: Option<String> },
}

impl AlertPayload {
    pub fn kind(&self) -> AlertKind {
        match self {
            AlertPayload::RiskyEvent(_) => AlertKind::RiskyEvent,
            AlertPayload::HighActivity { .. } => AlertKind::HighActivity,
            AlertPayload::LowActivity { .. } => AlertKind::LowActivity,
            AlertPayload::IdleTimeout { .. } => AlertKind::IdleTimeout,
            AlertPayload::AuthLocked { .. } => AlertKind::AuthLocked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub device_id: String,
    /// Stream time at which the condition became decidable.
    pub t: f64,
    pub payload: AlertPayload,
}

impl AlertRecord {
    pub fn kind(&self) -> AlertKind {
        self.payload.kind()
    }
}

/// One line of a device log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "kebab-case")]
pub enum LogEntry {
    History(HistoryRecord),
    Alert(AlertRecord),
    /// The stream jumped by more than the gap limit; state was reset.
    Gap {
        device_id: String,
        t_before: f64,
        t_after: f64,
    },
    /// A new stream header restarted the pipeline.
    Restart {
        device_id: String,
        rate_hz: f64,
    },
}

impl LogEntry {
    pub fn t(&self) -> f64 {
        match self {
            LogEntry::History(h) => h.t,
            LogEntry::Alert(a) => a.t,
            LogEntry::Gap { t_after, .. } => *t_after,
            LogEntry::Restart { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log entries always serialize")
    }
}

/// `kcal = c · Σ level·Δt` over `(level, duration)` pairs. Indicative only.
pub fn calorie_estimate(levels: &[(f64, f64)], kcal_per_g_s: f64) -> f64 {
    kcal_per_g_s * levels.iter().map(|(level, dt)| level * dt).sum::<f64>()
}
