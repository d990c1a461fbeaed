//! Per-device stream processing: activity instances, risky-event detection,
//! identity checks and the server-side alert rules.
//!
//! A pipeline is a deterministic function of its settings, models and the
//! ordered records it is fed; live ingest and offline batch runs share it.

use std::collections::VecDeque;
use std::sync::Arc;

use activitymon_core::activity::stream_instance_feature;
use activitymon_core::auth::{DecisionMode, SecurityEvent};
use activitymon_core::features::{combine_auth, motion_auth_features, AudioSpectrum};
use activitymon_core::signal::{high_passed_magnitude, HighPass};
use activitymon_core::trace::TraceRecord;
use activitymon_core::{
    activity_level, classify_activity, identify_window, security_level, vote_identify, AccelSample, AccelStream,
    ActivityModels, AudioFrame, AuthDecision, Config, DetectorEvent, EventDetector, Identifier, SecurityLevel,
    ShockModel, Unit, Window,
};
use serde::{Deserialize, Serialize};

use crate::config::{MonitorConfig, PrivacyMode};
use crate::error::ServiceResult;
use crate::records::{calorie_estimate, AlertPayload, AlertRecord, AuthSummary, HistoryRecord, LogEntry};

/// Trained models shared by every pipeline of a server.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub activity: Option<Arc<ActivityModels>>,
    pub shock: Option<Arc<ShockModel>>,
    pub identifier: Option<Arc<Identifier>>,
}

/// Everything a pipeline's output depends on besides its input.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub analytics: Config,
    pub monitor: MonitorConfig,
    pub privacy: PrivacyMode,
    pub owner: Option<String>,
}

/// Live view of a pipeline for status queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStatus {
    pub rate_hz: f64,
    pub samples: u64,
    pub last_t: Option<f64>,
    /// Impact time while the detector waits out the quiet period.
    pub awaiting_quiet_since: Option<f64>,
    pub security_level: Option<SecurityLevel>,
}

#[derive(Debug, Default)]
struct AuthState {
    window_start: f64,
    samples: Vec<AccelSample>,
    pending: Vec<AuthDecision>,
    events: Vec<SecurityEvent>,
    voted: Option<AuthDecision>,
    level: Option<SecurityLevel>,
    windows_in_instance: usize,
}

#[derive(Debug, Default)]
struct RuleState {
    next_tick: f64,
    /// Sum and count of absolute high-passed magnitudes since the last tick.
    tick_sum: f64,
    tick_count: usize,
    /// (t, high-passed magnitude) over the high-activity horizon.
    trail: VecDeque<(f64, f64)>,
    high_alerted: bool,
    idle_since: Option<f64>,
    idle_alerted: bool,
    /// (end time, active) of classified instances.
    instances: VecDeque<(f64, bool)>,
    low_alerted: bool,
}

pub struct DevicePipeline {
    device_id: String,
    rate_hz: f64,
    settings: PipelineSettings,
    models: Models,
    detector: EventDetector,
    /// High-pass on the sample magnitude, the same signal instance levels use.
    level_filter: HighPass,
    spectrum: AudioSpectrum,
    t0: Option<f64>,
    last_t: Option<f64>,
    samples_seen: u64,
    instance_start: f64,
    instance: Vec<AccelSample>,
    audio: Vec<AudioFrame>,
    auth: AuthState,
    rules: RuleState,
}

impl std::fmt::Debug for DevicePipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DevicePipeline")
            .field("device_id", &self.device_id)
            .field("rate_hz", &self.rate_hz)
            .field("samples_seen", &self.samples_seen)
            .finish_non_exhaustive()
    }
}

impl DevicePipeline {
    pub fn new(
        device_id: impl Into<String>,
        rate_hz: f64,
        settings: PipelineSettings,
        models: Models,
    ) -> ServiceResult<Self> {
        let device_id = device_id.into();
        settings.analytics.validate()?;
        settings.monitor.validate()?;
        let detector = EventDetector::new(
            device_id.clone(),
            rate_hz,
            settings.monitor.detection_mode,
            settings.analytics.events.clone(),
            models.shock.clone(),
        )?;
        let level_filter = HighPass::new(settings.analytics.activity.features.cutoff_hz, rate_hz)?;
        Ok(Self {
            device_id,
            rate_hz,
            settings,
            models,
            detector,
            level_filter,
            spectrum: AudioSpectrum::new(),
            t0: None,
            last_t: None,
            samples_seen: 0,
            instance_start: 0.0,
            instance: Vec::new(),
            audio: Vec::new(),
            auth: AuthState::default(),
            rules: RuleState::default(),
        })
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    /// Applies to records processed from now on.
    pub fn set_privacy(&mut self, privacy: PrivacyMode) {
        self.settings.privacy = privacy;
    }

    /// Applies to security levels computed from now on.
    pub fn set_security(&mut self, security: activitymon_core::auth::SecurityConfig) {
        self.settings.analytics.security = security;
    }

    /// Applies to rule evaluations from now on.
    pub fn set_monitor(&mut self, monitor: MonitorConfig) {
        self.settings.monitor = monitor;
    }

    pub fn status(&self) -> PipelineStatus {
        PipelineStatus {
            rate_hz: self.rate_hz,
            samples: self.samples_seen,
            last_t: self.last_t,
            awaiting_quiet_since: self.detector.fsm().awaiting_quiet(),
            security_level: self.auth.level,
        }
    }

    /// Drops all stream state, keeping identity, settings and models.
    fn reset(&mut self) -> ServiceResult<()> {
        let fresh = Self::new(
            self.device_id.clone(),
            self.rate_hz,
            self.settings.clone(),
            self.models.clone(),
        )?;
        let samples_seen = self.samples_seen;
        *self = fresh;
        self.samples_seen = samples_seen;
        Ok(())
    }

    pub fn push(&mut self, record: &TraceRecord) -> ServiceResult<Vec<LogEntry>> {
        match record {
            TraceRecord::Sample(s) => self.push_sample(s),
            TraceRecord::Audio(f) => {
                self.push_audio(f.clone());
                Ok(Vec::new())
            }
        }
    }

    pub fn push_audio(&mut self, frame: AudioFrame) {
        self.detector.push_audio(frame.clone());
        self.audio.push(frame);
    }

    /// Feeds one g-unit sample. Samples must arrive in time order.
    pub fn push_sample(&mut self, s: &AccelSample) -> ServiceResult<Vec<LogEntry>> {
        let mut out = Vec::new();
        if let Some(last) = self.last_t {
            if s.t <= last {
                return Err(activitymon_core::Error::Stream(format!("sample at {} after {}", s.t, last)).into());
            }
            if s.t - last > self.settings.monitor.gap_limit_s {
                out.push(LogEntry::Gap {
                    device_id: self.device_id.clone(),
                    t_before: last,
                    t_after: s.t,
                });
                // Audio delivered just ahead of this sample belongs to the new stretch.
                let audio = std::mem::take(&mut self.audio);
                self.reset()?;
                for f in audio.into_iter().filter(|f| f.t_end() > s.t) {
                    self.push_audio(f);
                }
            }
        }
        let t0 = *self.t0.get_or_insert(s.t);
        if self.last_t.is_none() {
            self.instance_start = t0;
            self.auth.window_start = t0;
            self.rules.next_tick = t0 + self.settings.monitor.tick_s;
        }

        self.close_auth_windows(s.t, &mut out)?;
        self.close_instances(s.t, &mut out)?;
        self.run_ticks(s.t, &mut out);

        for e in self.detector.push_sample(s)? {
            if let DetectorEvent::Alarm(alarm) = e {
                let t = alarm.t_alarm;
                out.push(LogEntry::Alert(AlertRecord {
                    device_id: self.device_id.clone(),
                    t,
                    payload: AlertPayload::RiskyEvent(alarm),
                }));
                self.auth.events.push(SecurityEvent::RiskyAlarm { t });
                self.update_security(t, &mut out);
            }
        }

        let hp = self.level_filter.process(s.magnitude());
        self.rules.tick_sum += hp.abs();
        self.rules.tick_count += 1;
        self.rules.trail.push_back((s.t, hp));
        self.instance.push(*s);
        self.auth.samples.push(*s);
        self.last_t = Some(s.t);
        self.samples_seen += 1;
        Ok(out)
    }

    fn full_privacy(&self) -> bool {
        self.settings.privacy == PrivacyMode::Full
    }

    fn close_auth_windows(&mut self, t: f64, out: &mut Vec<LogEntry>) -> ServiceResult<()> {
        let window_s = self.settings.analytics.auth.window_s;
        while t >= self.auth.window_start + window_s {
            let start = self.auth.window_start;
            let end = start + window_s;
            self.auth.window_start = end;
            let samples = std::mem::take(&mut self.auth.samples);
            let Some(identifier) = self.models.identifier.clone() else {
                continue;
            };
            let Some(window) = Window::from_samples(&samples, 1.0 / self.rate_hz) else {
                continue;
            };
            if window.len() < 2 {
                continue;
            }
            let Some(frame) = AudioFrame::slice_span(&self.audio, start, end) else {
                continue;
            };
            let features = combine_auth(&motion_auth_features(&window)?, &self.spectrum.features(&frame)?)?;
            let decision = identify_window(end, &features, &identifier)?;
            self.auth.windows_in_instance += 1;
            self.auth.pending.push(decision);
            if self.auth.pending.len() >= self.settings.analytics.auth.vote_windows {
                let voted = vote_identify(&self.auth.pending, identifier.users())?;
                self.auth.pending.clear();
                self.auth.events.push(SecurityEvent::Decision(voted.clone()));
                self.auth.voted = Some(voted);
                self.update_security(end, out);
            }
        }
        // Audio wholly before the open window is no longer needed.
        let keep_from = self.auth.window_start;
        self.audio.retain(|f| f.t_end() > keep_from);
        Ok(())
    }

    fn update_security(&mut self, now: f64, out: &mut Vec<LogEntry>) {
        let Some(owner) = self.settings.owner.clone() else {
            return;
        };
        if self.models.identifier.is_none() {
            return;
        }
        let level = security_level(&self.auth.events, &owner, now, &self.settings.analytics.security);
        if level == SecurityLevel::Locked && self.auth.level != Some(SecurityLevel::Locked) && self.full_privacy() {
            out.push(LogEntry::Alert(AlertRecord {
                device_id: self.device_id.clone(),
                t: now,
                payload: AlertPayload::AuthLocked {
                    user_id: self.auth.voted.as_ref().map(|d| d.user_id.clone()),
                },
            }));
        }
        self.auth.level = Some(level);
        // Only the latest vote and what follows it can affect the level.
        if let Some(i) = self.auth.events.iter().rposition(|e| {
            matches!(
                e,
                SecurityEvent::Decision(AuthDecision {
                    mode: DecisionMode::Voted,
                    ..
                })
            )
        }) {
            self.auth.events.drain(..i);
        }
    }

    fn close_instances(&mut self, t: f64, out: &mut Vec<LogEntry>) -> ServiceResult<()> {
        let instance_s = self.settings.analytics.activity.features.instance_s;
        while t >= self.instance_start + instance_s {
            let start = self.instance_start;
            let end = start + instance_s;
            self.instance_start = end;
            let samples = std::mem::take(&mut self.instance);
            if samples.len() < 3 {
                continue;
            }
            let record = self.history_record(start, end, samples)?;
            if let Some(class) = record.class_for_rules {
                self.rules.instances.push_back((end, class.is_active()));
                self.check_low_activity(end, out);
            }
            out.push(LogEntry::History(record.record));
        }
        Ok(())
    }

    fn history_record(&mut self, start: f64, end: f64, samples: Vec<AccelSample>) -> ServiceResult<Classified> {
        let a = &self.settings.analytics.activity;
        let stream = AccelStream::new(self.device_id.clone(), self.rate_hz, Unit::G, samples)?;
        let mags = high_passed_magnitude(&stream, a.features.cutoff_hz)?;
        let series: Vec<(f64, f64)> = stream.samples.iter().map(|s| s.t).zip(mags).collect();
        let points = activity_level(&series, a.min_prominence)?;
        let level = if points.is_empty() {
            0.0
        } else {
            points.iter().map(|p| p.level).sum::<f64>() / points.len() as f64
        };
        let class = match &self.models.activity {
            Some(m) => match stream_instance_feature(&stream, &a.features) {
                Ok(x) => Some(classify_activity(&x, m)?.0),
                Err(_) => None,
            },
            None => None,
        };
        let full = self.full_privacy();
        let auth = (full && self.models.identifier.is_some()).then(|| AuthSummary {
            voted: self.auth.voted.clone(),
            level: self.auth.level.unwrap_or(SecurityLevel::Elevated),
            windows: self.auth.windows_in_instance,
        });
        self.auth.windows_in_instance = 0;
        let duration = end - start;
        Ok(Classified {
            class_for_rules: class,
            record: HistoryRecord {
                device_id: self.device_id.clone(),
                t_start: start,
                t: end,
                level,
                class: if full { class } else { None },
                auth,
                kcal_indicative: calorie_estimate(&[(level, duration)], self.settings.monitor.kcal_per_g_s),
            },
        })
    }

    fn check_low_activity(&mut self, now: f64, out: &mut Vec<LogEntry>) {
        let m = &self.settings.monitor;
        let horizon = m.low_activity_window_s;
        let r = &mut self.rules;
        while r.instances.front().is_some_and(|(t, _)| *t <= now - horizon) {
            r.instances.pop_front();
        }
        let t0 = self.t0.unwrap_or(now);
        if now - t0 < horizon || r.instances.is_empty() {
            return;
        }
        let active = r.instances.iter().filter(|(_, a)| *a).count() as f64 / r.instances.len() as f64;
        if active < m.low_activity_fraction {
            if !r.low_alerted {
                r.low_alerted = true;
                out.push(LogEntry::Alert(AlertRecord {
                    device_id: self.device_id.clone(),
                    t: now,
                    payload: AlertPayload::LowActivity {
                        active_fraction: active,
                        over_s: horizon,
                    },
                }));
            }
        } else {
            r.low_alerted = false;
        }
    }

    fn run_ticks(&mut self, t: f64, out: &mut Vec<LogEntry>) {
        while t >= self.rules.next_tick {
            let tick = self.rules.next_tick;
            self.rules.next_tick += self.settings.monitor.tick_s;
            self.evaluate_rules(tick, out);
        }
    }

    fn evaluate_rules(&mut self, tick: f64, out: &mut Vec<LogEntry>) {
        let m = self.settings.monitor.clone();
        let min_prominence = self.settings.analytics.activity.min_prominence;
        let t0 = self.t0.unwrap_or(tick);
        let r = &mut self.rules;

        while r.trail.front().is_some_and(|(t, _)| *t < tick - m.high_activity_s) {
            r.trail.pop_front();
        }
        if tick - t0 >= m.high_activity_s && r.trail.len() >= 3 {
            let series: Vec<(f64, f64)> = r.trail.iter().copied().collect();
            let points = activity_level(&series, min_prominence).unwrap_or_default();
            let mean = if points.is_empty() {
                0.0
            } else {
                points.iter().map(|p| p.level).sum::<f64>() / points.len() as f64
            };
            if mean > m.high_activity_level {
                if !r.high_alerted {
                    r.high_alerted = true;
                    out.push(LogEntry::Alert(AlertRecord {
                        device_id: self.device_id.clone(),
                        t: tick,
                        payload: AlertPayload::HighActivity {
                            mean_level: mean,
                            over_s: m.high_activity_s,
                        },
                    }));
                }
            } else {
                r.high_alerted = false;
            }
        }

        let tick_start = tick - m.tick_s;
        if r.tick_count > 0 {
            let mean = r.tick_sum / r.tick_count as f64;
            if mean < m.idle_magnitude {
                r.idle_since.get_or_insert(tick_start.max(t0));
            } else {
                r.idle_since = None;
                r.idle_alerted = false;
            }
        }
        r.tick_sum = 0.0;
        r.tick_count = 0;
        if let Some(since) = r.idle_since {
            if tick - since >= m.idle_timeout_s && !r.idle_alerted {
                r.idle_alerted = true;
                out.push(LogEntry::Alert(AlertRecord {
                    device_id: self.device_id.clone(),
                    t: tick,
                    payload: AlertPayload::IdleTimeout { idle_since: since },
                }));
            }
        }
    }
}

struct Classified {
    record: HistoryRecord,
    /// Class seen by the rules even when privacy hides it.
    class_for_rules: Option<activitymon_core::ActivityClass>,
}

/// Offline batch run: one fresh pipeline over a whole record sequence.
pub fn process_records(
    device_id: &str,
    rate_hz: f64,
    settings: &PipelineSettings,
    models: &Models,
    records: &[TraceRecord],
) -> ServiceResult<Vec<LogEntry>> {
    let mut p = DevicePipeline::new(device_id, rate_hz, settings.clone(), models.clone())?;
    let mut out = Vec::new();
    for r in records {
        out.extend(p.push(r)?);
    }
    Ok(out)
}

/// Serializes entries exactly as the device log stores them.
pub fn log_text(entries: &[LogEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&e.to_line());
        s.push('\n');
    }
    s
}
