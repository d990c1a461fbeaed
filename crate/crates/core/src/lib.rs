//! Accelerometer (and audio) analytics: activity level and class, risky-event
//! detection, and implicit user identification.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activity;
pub mod auth;
pub mod config;
pub mod error;
pub mod events;
pub mod experiments;
pub mod features;
pub mod models;
pub mod signal;
mod stats;
pub mod synth;
pub mod trace;

pub use activity::{
    activity_level, classify_activity, evaluate_classifier, train_activity_classifier, ActivityClass, ActivityInstance,
    ActivityLevelPoint, ActivityModels, ConfusionMatrix,
};
pub use auth::{
    enroll, identify_window, security_level, vote_identify, AuthDecision, AuthMetrics, FeatureSet, Identifier,
    SecurityLevel,
};
pub use config::Config;
pub use error::{Error, Result};
pub use events::{
    detect_free_fall, detect_quiet, detect_shock, fsm_step, DetectionMode, DetectorEvent, EventConfig, EventDetector,
    Observation, ObservationKind, QuietDecision, RiskyAlarm, RiskyEventFsm, ShockModel,
};
pub use features::{FeatureVector, Schema};
pub use models::{GmmModel, MlpModel, TrainConfig};
pub use signal::{AccelSample, AccelStream, AudioFrame, Unit, Window};
