//! Risky-event detection: free fall, then a shock, then a quiet period.
//!
//! [`EventDetector`] consumes a device's samples (and audio) in time order and
//! turns them into [`Observation`]s, which drive a [`RiskyEventFsm`]. The same
//! detector runs offline on trace files and live inside the monitoring
//! service, so both produce identical event logs for identical input.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{shock_features, FeatureVector, Schema};
use crate::models::document::{self, ModelKind};
use crate::models::{mlp_train, MlpModel, MlpTraining, TrainConfig};
use crate::signal::{magnitude, AccelSample, AudioFrame, AxisFilter, Window, DEFAULT_CUTOFF_HZ};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    /// Raw norm (g) below which the device counts as falling.
    pub freefall_threshold: f64,
    pub freefall_min_duration: f64,
    /// Longest gap (s) from the end of a free fall to the impact.
    pub impact_window: f64,
    pub quiet_duration: f64,
    /// Mean high-passed norm (g) under which the post-impact period is quiet.
    pub quiet_threshold: f64,
    pub cutoff_hz: f64,
    /// Raw norm (g) a local maximum must reach to be scored as a possible impact.
    pub shock_trigger: f64,
    /// Length of the window, centred on the candidate, fed to the shock model.
    pub shock_window: f64,
    /// A candidate must be the largest norm within this radius (s).
    pub candidate_radius: f64,
    /// Shock-class probability that must be exceeded.
    pub shock_threshold: f64,
    /// Delay after the impact before quiet measurement starts.
    pub impact_settle: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            freefall_threshold: 0.3,
            freefall_min_duration: 0.25,
            impact_window: 1.0,
            quiet_duration: 8.0,
            quiet_threshold: 0.05,
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            shock_trigger: 1.5,
            shock_window: 1.0,
            candidate_radius: 0.25,
            shock_threshold: 0.5,
            impact_settle: 0.25,
        }
    }
}

impl EventConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("freefall_threshold", self.freefall_threshold),
            ("freefall_min_duration", self.freefall_min_duration),
            ("impact_window", self.impact_window),
            ("quiet_duration", self.quiet_duration),
            ("quiet_threshold", self.quiet_threshold),
            ("cutoff_hz", self.cutoff_hz),
            ("shock_trigger", self.shock_trigger),
            ("shock_window", self.shock_window),
            ("candidate_radius", self.candidate_radius),
            ("shock_threshold", self.shock_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.freefall_threshold >= 1.0 {
            return Err(Error::Parameter("freefall_threshold must be below 1 g".into()));
        }
        if self.shock_threshold >= 1.0 {
            return Err(Error::Parameter("shock_threshold must be below 1".into()));
        }
        if !(self.impact_settle >= 0.0) {
            return Err(Error::Parameter("impact_settle must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionMode {
    /// Free fall, impact and quiet, in that order.
    ThreeStep,
    /// Every detected shock alarms (baseline).
    ImpactOnly,
}

/// Longest contiguous stretch of `samples` with norm below the free-fall
/// threshold, as `(start, end)` where `end` is the first sample back above it
/// (or the last sample plus one `period`).
pub fn longest_free_fall(samples: &[AccelSample], period: f64, cfg: &EventConfig) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let mut start: Option<f64> = None;
    let consider = |a: f64, b: f64, best: &mut Option<(f64, f64)>| {
        if best.is_none_or(|(x, y)| b - a > y - x) {
            *best = Some((a, b));
        }
    };
    for s in samples {
        if magnitude(s) < cfg.freefall_threshold {
            start.get_or_insert(s.t);
        } else if let Some(a) = start.take() {
            consider(a, s.t, &mut best);
        }
    }
    if let (Some(a), Some(last)) = (start, samples.last()) {
        consider(a, last.t + period, &mut best);
    }
    best
}

/// True when the raw norm stays below the free-fall threshold for at least
/// the minimum duration somewhere in the window.
pub fn detect_free_fall(w: &Window<'_>, cfg: &EventConfig) -> bool {
    let period = match w.samples {
        [a, b, ..] => b.t - a.t,
        _ => w.duration(),
    };
    longest_free_fall(w.samples, period, cfg).is_some_and(|(a, b)| b - a >= cfg.freefall_min_duration)
}

/// Index of the shock class in a shock model's outputs.
pub const SHOCK_CLASS: usize = 1;

/// Classifier for shock windows; classes are `["normal", "shock"]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockModel {
    pub mlp: MlpModel,
}

impl ShockModel {
    pub fn new(mlp: MlpModel) -> Result<Self> {
        if mlp.schema != Schema::Shock {
            return Err(Error::schema(Schema::Shock, mlp.schema));
        }
        if mlp.classes.len() != 2 {
            return Err(Error::Model("shock model must have two classes".into()));
        }
        mlp.validate()?;
        Ok(Self { mlp })
    }

    pub fn shock_probability(&self, x: &FeatureVector) -> Result<f64> {
        Ok(self.mlp.predict(x)?[SHOCK_CLASS])
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        document::save(path, ModelKind::ShockMlp, Schema::Shock, &self.mlp)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (_, mlp): (Schema, MlpModel) = document::load(path, ModelKind::ShockMlp)?;
        Self::new(mlp)
    }
}

/// Trains the shock classifier on labelled windows (`true` = shock).
pub fn train_shock_model(examples: &[(FeatureVector, bool)], cfg: &TrainConfig) -> Result<(ShockModel, MlpTraining)> {
    let data: Vec<FeatureVector> = examples.iter().map(|(x, _)| x.clone()).collect();
    let labels: Vec<usize> = examples.iter().map(|(_, s)| usize::from(*s)).collect();
    let classes = vec!["normal".to_string(), "shock".to_string()];
    let training = mlp_train(&data, &labels, &classes, cfg)?;
    Ok((ShockModel::new(training.model.clone())?, training))
}

/// `(is_shock, probability)`; the probability must strictly exceed `threshold`.
pub fn detect_shock(x: &FeatureVector, m: &ShockModel, threshold: f64) -> Result<(bool, f64)> {
    let p = m.shock_probability(x)?;
    Ok((p > threshold, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuietDecision {
    /// Not enough signal yet.
    Undecided,
    Quiet,
    Active,
}

/// Decides whether a raw segment starting after an impact is quiet.
///
/// The segment is high-passed with a filter primed on its first sample; the
/// mean norm over the first `quiet_duration` seconds is compared with the
/// threshold. Shorter segments are undecided.
pub fn detect_quiet(segment: &[AccelSample], rate_hz: f64, cfg: &EventConfig) -> Result<QuietDecision> {
    let mut q = QuietTracker::new(segment.first().map_or(0.0, |s| s.t), rate_hz, cfg)?;
    let period = 1.0 / rate_hz;
    for s in segment {
        if let Some(d) = q.push(s, cfg) {
            return Ok(d);
        }
    }
    match segment.last() {
        Some(last) if last.t + period >= q.start + cfg.quiet_duration - 1e-9 => Ok(q.decide(cfg)),
        _ => Ok(QuietDecision::Undecided),
    }
}

#[derive(Debug, Clone)]
struct QuietTracker {
    start: f64,
    first: Option<f64>,
    filter: AxisFilter,
    sum: f64,
    n: usize,
}

impl QuietTracker {
    fn new(start: f64, rate_hz: f64, cfg: &EventConfig) -> Result<Self> {
        Ok(Self {
            start,
            first: None,
            filter: AxisFilter::new(cfg.cutoff_hz, rate_hz)?,
            sum: 0.0,
            n: 0,
        })
    }

    /// Feeds one sample; returns a decision once `quiet_duration` has elapsed.
    fn push(&mut self, s: &AccelSample, cfg: &EventConfig) -> Option<QuietDecision> {
        if s.t < self.start {
            return None;
        }
        let first = *self.first.get_or_insert(s.t);
        if s.t >= first + cfg.quiet_duration - 1e-9 {
            return Some(self.decide(cfg));
        }
        self.sum += magnitude(&self.filter.process(s));
        self.n += 1;
        None
    }

    fn decide(&self, cfg: &EventConfig) -> QuietDecision {
        if self.n == 0 {
            return QuietDecision::Undecided;
        }
        if self.sum / (self.n as f64) < cfg.quiet_threshold {
            QuietDecision::Quiet
        } else {
            QuietDecision::Active
        }
    }
}

/// What the detector saw, stamped with the stream time at which it became known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    #[serde(flatten)]
    pub kind: ObservationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservationKind {
    FreeFall { t_start: f64, t_end: f64 },
    Shock { t_impact: f64, score: f64 },
    Quiet { t_impact: f64 },
    Active { t_impact: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum FsmState {
    Idle,
    FreeFallSeen { t_start: f64, t_end: f64 },
    ImpactSeen { t_freefall: f64, t_impact: f64, score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskyAlarm {
    pub device_id: String,
    pub mode: DetectionMode,
    /// Absent for impact-only alarms.
    pub t_freefall: Option<f64>,
    pub t_impact: f64,
    pub t_alarm: f64,
    pub shock_score: f64,
}

/// Three-stage detector state. Transitions only move forward
/// (idle → free fall → impact → alarm → idle); anything unexpected resets.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskyEventFsm {
    pub device_id: String,
    pub mode: DetectionMode,
    pub state: FsmState,
    /// Stream time at which the current state was entered.
    pub entered_at: f64,
    pub cfg: EventConfig,
    last_t: Option<f64>,
}

impl RiskyEventFsm {
    pub fn new(device_id: impl Into<String>, mode: DetectionMode, cfg: EventConfig) -> Self {
        Self {
            device_id: device_id.into(),
            mode,
            state: FsmState::Idle,
            entered_at: f64::NEG_INFINITY,
            cfg,
            last_t: None,
        }
    }

    fn enter(&mut self, state: FsmState, t: f64) {
        self.state = state;
        self.entered_at = t;
    }

    /// Applies timeouts up to time `t`.
    pub fn advance(&mut self, t: f64) {
        if let FsmState::FreeFallSeen { t_end, .. } = self.state {
            if t > t_end + self.cfg.impact_window {
                self.enter(FsmState::Idle, t);
            }
        }
    }

    /// Time of the impact whose quiet period is being awaited, if any.
    pub fn awaiting_quiet(&self) -> Option<f64> {
        match self.state {
            FsmState::ImpactSeen { t_impact, .. } => Some(t_impact),
            _ => None,
        }
    }

    pub fn step(&mut self, obs: &Observation) -> Result<Option<RiskyAlarm>> {
        if let Some(last) = self.last_t {
            if obs.t < last {
                return Err(Error::Stream(format!(
                    "observation at {} arrived after {}",
                    obs.t, last
                )));
            }
        }
        self.last_t = Some(obs.t);
        self.advance(obs.t);

        if self.mode == DetectionMode::ImpactOnly {
            if let ObservationKind::Shock { t_impact, score } = obs.kind {
                return Ok(Some(RiskyAlarm {
                    device_id: self.device_id.clone(),
                    mode: self.mode,
                    t_freefall: None,
                    t_impact,
                    t_alarm: obs.t,
                    shock_score: score,
                }));
            }
            return Ok(None);
        }

        use ObservationKind as K;
        match (self.state, obs.kind) {
            (_, K::FreeFall { t_start, t_end }) => {
                self.enter(FsmState::FreeFallSeen { t_start, t_end }, obs.t);
                Ok(None)
            }
            (FsmState::FreeFallSeen { t_start, t_end }, K::Shock { t_impact, score })
                if t_impact >= t_end - self.cfg.impact_window && t_impact <= t_end + self.cfg.impact_window =>
            {
                self.enter(
                    FsmState::ImpactSeen {
                        t_freefall: t_start,
                        t_impact,
                        score,
                    },
                    obs.t,
                );
                Ok(None)
            }
            (
                FsmState::ImpactSeen {
                    t_freefall,
                    t_impact,
                    score,
                },
                K::Quiet { t_impact: ti },
            ) if ti == t_impact => {
                self.enter(FsmState::Idle, obs.t);
                Ok(Some(RiskyAlarm {
                    device_id: self.device_id.clone(),
                    mode: self.mode,
                    t_freefall: Some(t_freefall),
                    t_impact,
                    t_alarm: obs.t,
                    shock_score: score,
                }))
            }
            (FsmState::Idle, _) => Ok(None),
            _ => {
                self.enter(FsmState::Idle, obs.t);
                Ok(None)
            }
        }
    }
}

/// Functional form of [`RiskyEventFsm::step`].
pub fn fsm_step(mut fsm: RiskyEventFsm, obs: &Observation) -> Result<(RiskyEventFsm, Option<RiskyAlarm>)> {
    let alarm = fsm.step(obs)?;
    Ok((fsm, alarm))
}

/// One line of a detector event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum DetectorEvent {
    Observation(Observation),
    Alarm(RiskyAlarm),
}

/// Shock features for the window of `shock_window` seconds centred on `t_centre`.
///
/// Missing audio counts as silence.
pub fn shock_window_features(
    samples: &[AccelSample],
    audio: &[AudioFrame],
    t_centre: f64,
    cfg: &EventConfig,
) -> Result<FeatureVector> {
    let half = cfg.shock_window / 2.0;
    let (t0, t1) = (t_centre - half, t_centre + half);
    let lo = samples.partition_point(|s| s.t < t0);
    let hi = samples.partition_point(|s| s.t < t1);
    let window = Window {
        t_start: t0,
        t_end: t1,
        samples: &samples[lo..hi],
    };
    let silence = AudioFrame {
        t_start: t0,
        rate_hz: 1.0,
        samples: vec![0.0],
    };
    let frame = AudioFrame::slice_span(audio, t0, t1).unwrap_or(silence);
    shock_features(&window, &frame)
}

/// Streaming risky-event detector for one device.
#[derive(Debug, Clone)]
pub struct EventDetector {
    cfg: EventConfig,
    rate_hz: f64,
    shock_model: Option<Arc<ShockModel>>,
    fsm: RiskyEventFsm,
    recent: VecDeque<AccelSample>,
    audio: Vec<AudioFrame>,
    /// Samples older than this have already been checked as impact candidates.
    scanned_until: f64,
    candidates: VecDeque<f64>,
    fall_start: Option<f64>,
    quiet: Option<(f64, QuietTracker)>,
}

impl EventDetector {
    /// Without a shock model no impacts are ever reported.
    pub fn new(
        device_id: impl Into<String>,
        rate_hz: f64,
        mode: DetectionMode,
        cfg: EventConfig,
        shock_model: Option<Arc<ShockModel>>,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(rate_hz > 0.0) {
            return Err(Error::Parameter(format!("rate_hz must be > 0, got {rate_hz}")));
        }
        Ok(Self {
            fsm: RiskyEventFsm::new(device_id, mode, cfg.clone()),
            cfg,
            rate_hz,
            shock_model,
            recent: VecDeque::new(),
            audio: Vec::new(),
            scanned_until: f64::NEG_INFINITY,
            candidates: VecDeque::new(),
            fall_start: None,
            quiet: None,
        })
    }

    pub fn fsm(&self) -> &RiskyEventFsm {
        &self.fsm
    }

    fn retention(&self) -> f64 {
        self.cfg.shock_window + 2.0 * self.cfg.candidate_radius + 1.0
    }

    pub fn push_audio(&mut self, frame: AudioFrame) {
        self.audio.push(frame);
    }

    pub fn push(&mut self, record: &TraceRecord) -> Result<Vec<DetectorEvent>> {
        match record {
            TraceRecord::Audio(f) => {
                self.push_audio(f.clone());
                Ok(Vec::new())
            }
            TraceRecord::Sample(s) => self.push_sample(s),
        }
    }

    /// Feeds one raw (g-unit) sample and returns what it revealed.
    pub fn push_sample(&mut self, s: &AccelSample) -> Result<Vec<DetectorEvent>> {
        if let Some(last) = self.recent.back() {
            if s.t <= last.t {
                return Err(Error::Stream(format!("sample at {} after {}", s.t, last.t)));
            }
        }
        let t = s.t;
        let mut observations = Vec::new();

        // Free fall: a run of low norm that ends when the norm recovers.
        if magnitude(s) < self.cfg.freefall_threshold {
            self.fall_start.get_or_insert(t);
        } else if let Some(start) = self.fall_start.take() {
            if t - start >= self.cfg.freefall_min_duration {
                observations.push(Observation {
                    t,
                    kind: ObservationKind::FreeFall {
                        t_start: start,
                        t_end: t,
                    },
                });
            }
        }

        self.recent.push_back(*s);
        self.scan_candidates(t);
        self.score_candidates(t, &mut observations)?;

        let mut events = Vec::new();
        for obs in observations {
            self.apply(obs, &mut events)?;
        }

        // Quiet period after an impact.
        if let Some((t_impact, tracker)) = self.quiet.as_mut() {
            if let Some(d) = tracker.push(s, &self.cfg) {
                let t_impact = *t_impact;
                let kind = match d {
                    QuietDecision::Quiet => ObservationKind::Quiet { t_impact },
                    _ => ObservationKind::Active { t_impact },
                };
                self.apply(Observation { t, kind }, &mut events)?;
            }
        }
        self.fsm.advance(t);

        let keep_from = t - self.retention();
        while self.recent.front().is_some_and(|x| x.t < keep_from) {
            self.recent.pop_front();
        }
        self.audio.retain(|f| f.t_end() >= keep_from);
        Ok(events)
    }

    fn apply(&mut self, obs: Observation, events: &mut Vec<DetectorEvent>) -> Result<()> {
        let alarm = self.fsm.step(&obs)?;
        events.push(DetectorEvent::Observation(obs));
        if let Some(a) = alarm {
            events.push(DetectorEvent::Alarm(a));
        }
        self.quiet = match self.fsm.awaiting_quiet() {
            Some(ti) if self.quiet.as_ref().is_some_and(|(q, _)| *q == ti) => self.quiet.take(),
            Some(ti) => Some((
                ti,
                QuietTracker::new(ti + self.cfg.impact_settle, self.rate_hz, &self.cfg)?,
            )),
            None => None,
        };
        Ok(())
    }

    /// Marks samples that are now `candidate_radius` old as impact candidates
    /// when they are the largest norm within the radius and above the trigger.
    fn scan_candidates(&mut self, now: f64) {
        let r = self.cfg.candidate_radius;
        let decidable = now - r;
        let samples: Vec<AccelSample> = self.recent.iter().copied().collect();
        for (i, c) in samples.iter().enumerate() {
            if c.t <= self.scanned_until || c.t > decidable {
                continue;
            }
            let m = magnitude(c);
            if m < self.cfg.shock_trigger {
                continue;
            }
            let earlier_ok = samples[..i]
                .iter()
                .rev()
                .take_while(|o| o.t >= c.t - r)
                .all(|o| magnitude(o) < m);
            let later_ok = samples[i + 1..]
                .iter()
                .take_while(|o| o.t <= c.t + r)
                .all(|o| magnitude(o) <= m);
            if earlier_ok && later_ok {
                self.candidates.push_back(c.t);
            }
        }
        if decidable > self.scanned_until {
            self.scanned_until = decidable;
        }
    }

    fn score_candidates(&mut self, now: f64, out: &mut Vec<Observation>) -> Result<()> {
        let half = self.cfg.shock_window / 2.0;
        while let Some(&tc) = self.candidates.front() {
            if now < tc + half {
                break;
            }
            self.candidates.pop_front();
            let Some(model) = &self.shock_model else { continue };
            let samples: Vec<AccelSample> = self.recent.iter().copied().collect();
            let x = shock_window_features(&samples, &self.audio, tc, &self.cfg)?;
            let (hit, score) = detect_shock(&x, model, self.cfg.shock_threshold)?;
            if hit {
                out.push(Observation {
                    t: now,
                    kind: ObservationKind::Shock { t_impact: tc, score },
                });
            }
        }
        Ok(())
    }
}

/// Runs a detector over a whole time-merged trace.
pub fn detect_records(detector: &mut EventDetector, records: &[TraceRecord]) -> Result<Vec<DetectorEvent>> {
    let mut out = Vec::new();
    for r in records {
        out.extend(detector.push(r)?);
    }
    Ok(out)
}

/// The alarms contained in an event log.
pub fn alarms(events: &[DetectorEvent]) -> Vec<&RiskyAlarm> {
    events
        .iter()
        .filter_map(|e| match e {
            DetectorEvent::Alarm(a) => Some(a),
            _ => None,
        })
        .collect()
}
