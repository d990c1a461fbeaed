//! The multi-device monitor: one serialized session per registered device,
//! durable logs, alert fan-out and the queries behind the HTTP API.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use activitymon_core::auth::SecurityConfig;
use activitymon_core::trace::{merge_records, TraceRecord};
use activitymon_core::{AccelStream, ActivityClass, SecurityLevel, Unit};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::config::{AppConfig, DeviceConfig, MonitorConfig, PrivacyMode, RuntimeSettings};
use crate::error::{ServiceError, ServiceResult};
use crate::pipeline::{DevicePipeline, Models, PipelineSettings, PipelineStatus};
use crate::records::{AlertKind, AlertRecord, HistoryRecord, LogEntry, CALORIE_NOTE};
use crate::store::{Acknowledgement, DeviceStore, InputRecord, StoredInput};
use crate::wire::{Ack, IngestLine, Snapshot, WireBody};

/// Settings persisted across restarts after a runtime change.
pub const SETTINGS_FILE: &str = "settings.json";

/// An alert as the API presents it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertView {
    pub device_id: String,
    /// Position in the device log; with the device id, the alert's identity.
    pub index: usize,
    pub alert: AlertRecord,
    pub acks: Vec<Acknowledgement>,
}

impl AlertView {
    pub fn acknowledged(&self) -> bool {
        !self.acks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceStatus {
    pub device_id: String,
    pub privacy: PrivacyMode,
    pub last_seq: Option<u64>,
    pub stream: Option<PipelineStatus>,
    pub latest: Option<HistoryRecord>,
    pub log_entries: usize,
    pub unacknowledged_alerts: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryQuery {
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub class: Option<ActivityClass>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlertQuery {
    pub device: Option<String>,
    pub kind: Option<AlertKind>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    #[serde(default)]
    pub unacknowledged: bool,
}

fn in_range(t: f64, from: Option<f64>, to: Option<f64>) -> bool {
    from.is_none_or(|f| t >= f) && to.is_none_or(|e| t <= e)
}

/// Aggregates for the statistics panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceStats {
    pub device_id: String,
    pub instances: usize,
    /// `(lower edge, count)` of activity levels in 0.2 g bins; the last bin is open.
    pub level_histogram: Vec<(f64, usize)>,
    /// Share of instances per class; absent for coarse devices.
    pub class_shares: Option<BTreeMap<ActivityClass, f64>>,
    pub alert_counts: BTreeMap<AlertKind, usize>,
    pub kcal: f64,
    pub kcal_note: String,
}

const LEVEL_BINS: usize = 8;
const LEVEL_BIN_G: f64 = 0.2;

struct DeviceSession {
    id: String,
    config: DeviceConfig,
    analytics: activitymon_core::Config,
    monitor: MonitorConfig,
    models: Models,
    store: DeviceStore,
    checkpoint_every: usize,
    pipeline: Option<DevicePipeline>,
    unit: Unit,
    last_seq: Option<u64>,
    log: Vec<LogEntry>,
    acks: Vec<Acknowledgement>,
}

impl DeviceSession {
    fn pipeline_settings(&self) -> PipelineSettings {
        PipelineSettings {
            analytics: self.analytics.clone(),
            monitor: self.monitor.clone(),
            privacy: self.config.privacy,
            owner: self.config.owner.clone(),
        }
    }

    /// Applies one stored input. Shared by live ingest and recovery, so the
    /// log is a function of the input file alone.
    fn apply(&mut self, record: &InputRecord) -> ServiceResult<Vec<LogEntry>> {
        match record {
            InputRecord::Header { rate_hz, unit } => {
                let same = self
                    .pipeline
                    .as_ref()
                    .is_some_and(|p| p.rate_hz() == *rate_hz && self.unit == *unit);
                if same {
                    return Ok(Vec::new());
                }
                let restarted = self.pipeline.is_some();
                self.pipeline = Some(DevicePipeline::new(
                    self.id.clone(),
                    *rate_hz,
                    self.pipeline_settings(),
                    self.models.clone(),
                )?);
                self.unit = *unit;
                Ok(if restarted {
                    vec![LogEntry::Restart {
                        device_id: self.id.clone(),
                        rate_hz: *rate_hz,
                    }]
                } else {
                    Vec::new()
                })
            }
            InputRecord::Sample(s) => self.require_pipeline()?.push_sample(s),
            InputRecord::Audio(f) => {
                self.require_pipeline()?.push_audio(f.clone());
                Ok(Vec::new())
            }
            InputRecord::Settings {
                privacy,
                monitor,
                security,
            } => {
                self.config.privacy = *privacy;
                self.monitor = monitor.clone();
                self.analytics.security = security.clone();
                if let Some(p) = &mut self.pipeline {
                    p.set_privacy(*privacy);
                    p.set_monitor(monitor.clone());
                    p.set_security(security.clone());
                }
                Ok(Vec::new())
            }
        }
    }

    fn require_pipeline(&mut self) -> ServiceResult<&mut DevicePipeline> {
        let id = self.id.clone();
        self.pipeline
            .as_mut()
            .ok_or_else(|| ServiceError::Rejected(format!("device {id} must send a stream header first")))
    }

    fn last_t(&self) -> Option<f64> {
        self.pipeline.as_ref().and_then(|p| p.status().last_t)
    }

    /// Converts a wire body into a stored record, rejecting anything the
    /// pipeline would refuse so rejected input leaves no trace.
    fn admit(&self, body: WireBody) -> ServiceResult<InputRecord> {
        match body {
            WireBody::Header { rate_hz, unit } => {
                if !(rate_hz > 0.0 && rate_hz.is_finite()) {
                    return Err(ServiceError::Malformed(format!(
                        "rate_hz must be positive, got {rate_hz}"
                    )));
                }
                Ok(InputRecord::Header { rate_hz, unit })
            }
            WireBody::Sample(s) => {
                if self.pipeline.is_none() {
                    return Err(ServiceError::Rejected(format!(
                        "device {} must send a stream header first",
                        self.id
                    )));
                }
                if !s.is_finite() {
                    return Err(ServiceError::Malformed("non-finite sample".into()));
                }
                if let Some(last) = self.last_t() {
                    if s.t <= last {
                        return Err(ServiceError::Rejected(format!(
                            "sample at {} is not after {}",
                            s.t, last
                        )));
                    }
                }
                Ok(InputRecord::Sample(s.scaled(self.unit.to_g_factor())))
            }
            WireBody::Audio(f) => {
                if self.pipeline.is_none() {
                    return Err(ServiceError::Rejected(format!(
                        "device {} must send a stream header first",
                        self.id
                    )));
                }
                f.validate().map_err(|e| ServiceError::Malformed(e.to_string()))?;
                Ok(InputRecord::Audio(f))
            }
        }
    }

    /// Applies and persists a batch of admitted inputs. On a processing
    /// failure the in-memory state is rebuilt from disk.
    fn commit(&mut self, mut inputs: Vec<StoredInput>) -> ServiceResult<Vec<(usize, LogEntry)>> {
        // A fresh log starts by recording the settings it was produced under.
        if self.store.index().input_lines == 0
            && !matches!(inputs.first().map(|i| &i.record), Some(InputRecord::Settings { .. }))
        {
            inputs.insert(
                0,
                StoredInput {
                    seq: None,
                    record: self.settings_record(),
                },
            );
        }
        let mut entries = Vec::new();
        for i in &inputs {
            match self.apply(&i.record) {
                Ok(e) => entries.extend(e),
                Err(e) => {
                    self.rebuild()?;
                    return Err(e);
                }
            }
        }
        self.store.append(&inputs, &entries)?;
        if let Some(seq) = inputs.iter().filter_map(|i| i.seq).next_back() {
            self.last_seq = Some(seq);
        }
        let first = self.log.len();
        self.log.extend(entries.iter().cloned());
        Ok(entries.into_iter().enumerate().map(|(k, e)| (first + k, e)).collect())
    }

    fn rebuild(&mut self) -> ServiceResult<()> {
        let (store, stored) = DeviceStore::open(self.store.dir(), self.checkpoint_every)?;
        self.store = store;
        self.restore(stored.inputs, stored.log, stored.acks)
    }

    fn settings_record(&self) -> InputRecord {
        InputRecord::Settings {
            privacy: self.config.privacy,
            monitor: self.monitor.clone(),
            security: self.analytics.security.clone(),
        }
    }

    /// Replays `inputs` from a blank state and reconciles with `stored_log`.
    ///
    /// A stored log that is a prefix of the replay gets the missing tail
    /// appended. A log that disagrees (models or analytics settings changed
    /// since it was written) is kept as the historical record; the replay
    /// only rebuilds the pipeline state.
    fn restore(
        &mut self,
        inputs: Vec<StoredInput>,
        stored_log: Vec<LogEntry>,
        acks: Vec<Acknowledgement>,
    ) -> ServiceResult<()> {
        let configured = self.settings_record();
        self.pipeline = None;
        self.unit = Unit::G;
        self.log.clear();
        self.last_seq = None;
        let mut regenerated = Vec::new();
        for i in &inputs {
            regenerated.extend(self.apply(&i.record)?);
            if i.seq.is_some() {
                self.last_seq = i.seq;
            }
        }
        let agrees = stored_log.len() <= regenerated.len() && regenerated[..stored_log.len()] == stored_log[..];
        if agrees {
            if regenerated.len() > stored_log.len() {
                self.store.append_log(&regenerated[stored_log.len()..])?;
            }
            self.log = regenerated;
        } else {
            tracing::warn!(device = %self.id, "stored log differs from a replay of its input; keeping the stored log");
            self.log = stored_log;
        }
        self.acks = acks;
        if !inputs.is_empty() && self.settings_record() != configured {
            self.apply(&configured)?;
            self.store.append(
                &[StoredInput {
                    seq: None,
                    record: configured,
                }],
                &[],
            )?;
        }
        Ok(())
    }

    fn alert_view(&self, index: usize) -> Option<AlertView> {
        let LogEntry::Alert(alert) = self.log.get(index)? else {
            return None;
        };
        Some(AlertView {
            device_id: self.id.clone(),
            index,
            alert: alert.clone(),
            acks: self.acks.iter().filter(|a| a.index == index).cloned().collect(),
        })
    }

    fn status(&self) -> DeviceStatus {
        let full = self.config.privacy == PrivacyMode::Full;
        let stream = self.pipeline.as_ref().map(|p| {
            let mut s = p.status();
            if !full {
                s.security_level = None;
            }
            s
        });
        let unacked = self
            .log
            .iter()
            .enumerate()
            .filter(|(i, e)| matches!(e, LogEntry::Alert(_)) && !self.acks.iter().any(|a| a.index == *i))
            .count();
        DeviceStatus {
            device_id: self.id.clone(),
            privacy: self.config.privacy,
            last_seq: self.last_seq,
            stream,
            latest: self.log.iter().rev().find_map(|e| match e {
                LogEntry::History(h) => Some(h.clone()),
                _ => None,
            }),
            log_entries: self.log.len(),
            unacknowledged_alerts: unacked,
        }
    }
}

/// Shared server state. Cheap to share behind an `Arc`.
pub struct Monitor {
    config: RwLock<AppConfig>,
    data_dir: PathBuf,
    sessions: BTreeMap<String, Mutex<DeviceSession>>,
    alerts: broadcast::Sender<AlertView>,
}

impl std::fmt::Debug for Monitor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Monitor")
            .field("data_dir", &self.data_dir)
            .field("devices", &self.sessions.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn lock(m: &Mutex<DeviceSession>) -> MutexGuard<'_, DeviceSession> {
    // A panic mid-update cannot leave the log half-written in memory: the
    // session is rebuilt from disk on the next failure anyway.
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Monitor {
    /// Opens every registered device's store under `config.service.data_dir`
    /// and replays it.
    pub fn open(mut config: AppConfig, models: Models) -> ServiceResult<Self> {
        config.validate()?;
        let data_dir = config.service.data_dir.clone();
        std::fs::create_dir_all(&data_dir).map_err(|e| ServiceError::io(&data_dir, e))?;
        if let Some(saved) = load_settings(&data_dir)? {
            apply_settings(&mut config, &saved)?;
        }
        let mut sessions = BTreeMap::new();
        for (id, dev) in &config.devices {
            let (store, stored) =
                DeviceStore::open(&data_dir.join("devices").join(id), config.service.checkpoint_every)?;
            let mut s = DeviceSession {
                id: id.clone(),
                config: dev.clone(),
                analytics: config.analytics(),
                monitor: config.monitor.clone(),
                models: models.clone(),
                store,
                checkpoint_every: config.service.checkpoint_every,
                pipeline: None,
                unit: Unit::G,
                last_seq: None,
                log: Vec::new(),
                acks: Vec::new(),
            };
            s.restore(stored.inputs, stored.log, stored.acks)?;
            sessions.insert(id.clone(), Mutex::new(s));
        }
        let (alerts, _) = broadcast::channel(1024);
        Ok(Self {
            config: RwLock::new(config),
            data_dir,
            sessions,
            alerts,
        })
    }

    pub fn config(&self) -> AppConfig {
        self.config.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn device_ids(&self) -> Vec<String> {
        self.sessions.keys().cloned().collect()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<AlertView> {
        self.alerts.subscribe()
    }

    fn session(&self, id: &str) -> ServiceResult<&Mutex<DeviceSession>> {
        self.sessions
            .get(id)
            .ok_or_else(|| ServiceError::UnknownDevice(id.to_string()))
    }

    fn authorize(&self, id: &str, token: &str) -> ServiceResult<&Mutex<DeviceSession>> {
        let m = self.session(id)?;
        if lock(m).config.token != token {
            return Err(ServiceError::Unauthorized(id.to_string()));
        }
        Ok(m)
    }

    fn publish(&self, session: &DeviceSession, produced: &[(usize, LogEntry)]) {
        for (i, e) in produced {
            if matches!(e, LogEntry::Alert(_)) {
                if let Some(v) = session.alert_view(*i) {
                    // No subscribers is fine.
                    let _ = self.alerts.send(v);
                }
            }
        }
    }

    /// Handles one parsed wire line.
    pub fn ingest(&self, line: IngestLine) -> ServiceResult<Ack> {
        let m = self.authorize(&line.device_id, &line.token)?;
        let mut s = lock(m);
        if s.last_seq.is_some_and(|last| line.seq <= last) {
            return Ok(Ack::duplicate(line.seq));
        }
        let record = s.admit(line.body)?;
        let produced = s.commit(vec![StoredInput {
            seq: Some(line.seq),
            record,
        }])?;
        self.publish(&s, &produced);
        Ok(Ack::ok(line.seq, produced.len()))
    }

    /// Handles one raw wire line; never fails, errors become error acks.
    pub fn ingest_text(&self, text: &str) -> Ack {
        match IngestLine::parse(text) {
            Ok(line) => {
                let seq = line.seq;
                self.ingest(line).unwrap_or_else(|e| Ack::error(Some(seq), &e))
            }
            Err(e) => Ack::error(None, &e),
        }
    }

    /// Handles a snapshot upload: a whole trace file under one sequence
    /// number. Samples are re-sorted; overlap with earlier data is rejected.
    pub fn ingest_snapshot(&self, device_id: &str, token: &str, seq: u64, body: &str) -> ServiceResult<Ack> {
        let m = self.authorize(device_id, token)?;
        let mut s = lock(m);
        if s.last_seq.is_some_and(|last| seq <= last) {
            return Ok(Ack::duplicate(seq));
        }
        let snap = Snapshot::parse(body)?;
        let mut records = Vec::new();
        let (rate_hz, unit) = match &snap.header {
            Some((id, rate_hz, unit)) => {
                if id != device_id {
                    return Err(ServiceError::Malformed(format!(
                        "snapshot header names device {id}, not {device_id}"
                    )));
                }
                records.push(s.admit(WireBody::Header {
                    rate_hz: *rate_hz,
                    unit: *unit,
                })?);
                (*rate_hz, *unit)
            }
            None => match &s.pipeline {
                Some(p) => (p.rate_hz(), s.unit),
                None => {
                    return Err(ServiceError::Rejected(format!(
                        "device {device_id} must send a stream header first"
                    )))
                }
            },
        };
        // A header that changes rate or unit restarts the stream, so earlier data cannot overlap.
        let restarts = records.iter().any(|r| {
            matches!(r, InputRecord::Header { rate_hz, unit }
                if s.pipeline.as_ref().is_none_or(|p| p.rate_hz() != *rate_hz || s.unit != *unit))
        });
        if let (false, Some(first), Some(last)) = (restarts, snap.samples.first(), s.last_t()) {
            if first.t <= last {
                return Err(ServiceError::Rejected(format!(
                    "snapshot starts at {} but data up to {} was already received",
                    first.t, last
                )));
            }
        }
        for f in &snap.audio {
            f.validate().map_err(|e| ServiceError::Malformed(e.to_string()))?;
        }
        let c = unit.to_g_factor();
        let samples = snap.samples.iter().map(|x| x.scaled(c)).collect();
        let stream = AccelStream::new(device_id, rate_hz, Unit::G, samples)?;
        for r in merge_records(&stream, &snap.audio) {
            records.push(match r {
                TraceRecord::Sample(x) => InputRecord::Sample(x),
                TraceRecord::Audio(f) => InputRecord::Audio(f),
            });
        }
        let produced = s.commit(
            records
                .into_iter()
                .map(|record| StoredInput { seq: Some(seq), record })
                .collect(),
        )?;
        self.publish(&s, &produced);
        Ok(Ack::ok(seq, produced.len()))
    }

    pub fn status(&self) -> Vec<DeviceStatus> {
        self.sessions.values().map(|m| lock(m).status()).collect()
    }

    pub fn device_status(&self, id: &str) -> ServiceResult<DeviceStatus> {
        Ok(lock(self.session(id)?).status())
    }

    pub fn history(&self, id: &str, q: &HistoryQuery) -> ServiceResult<Vec<HistoryRecord>> {
        let s = lock(self.session(id)?);
        Ok(s.log
            .iter()
            .filter_map(|e| match e {
                LogEntry::History(h) if in_range(h.t, q.from, q.to) && q.class.is_none_or(|c| h.class == Some(c)) => {
                    Some(h.clone())
                }
                _ => None,
            })
            .collect())
    }

    pub fn alerts(&self, q: &AlertQuery) -> ServiceResult<Vec<AlertView>> {
        let ids: Vec<&String> = match &q.device {
            Some(d) => vec![
                self.sessions
                    .get_key_value(d)
                    .ok_or_else(|| ServiceError::UnknownDevice(d.clone()))?
                    .0,
            ],
            None => self.sessions.keys().collect(),
        };
        let mut out = Vec::new();
        for id in ids {
            let s = lock(&self.sessions[id]);
            for i in 0..s.log.len() {
                if let Some(v) = s.alert_view(i) {
                    if q.kind.is_none_or(|k| v.alert.kind() == k)
                        && in_range(v.alert.t, q.from, q.to)
                        && !(q.unacknowledged && v.acknowledged())
                    {
                        out.push(v);
                    }
                }
            }
        }
        out.sort_by(|a, b| {
            a.alert
                .t
                .total_cmp(&b.alert.t)
                .then_with(|| a.device_id.cmp(&b.device_id))
                .then(a.index.cmp(&b.index))
        });
        Ok(out)
    }

    /// Records an acknowledgement; earlier ones are kept.
    pub fn acknowledge(&self, id: &str, index: usize, note: &str) -> ServiceResult<AlertView> {
        let mut s = lock(self.session(id)?);
        if s.alert_view(index).is_none() {
            return Err(ServiceError::NotFound(format!("alert {index} of device {id}")));
        }
        let at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let ack = Acknowledgement {
            index,
            note: note.to_string(),
            at_unix,
        };
        s.store.append_ack(&ack)?;
        s.acks.push(ack);
        Ok(s.alert_view(index).expect("checked above"))
    }

    pub fn stats(&self, id: &str, from: Option<f64>, to: Option<f64>) -> ServiceResult<DeviceStats> {
        let s = lock(self.session(id)?);
        let full = s.config.privacy == PrivacyMode::Full;
        let mut histogram: Vec<(f64, usize)> = (0..LEVEL_BINS).map(|i| (i as f64 * LEVEL_BIN_G, 0)).collect();
        let mut classes: BTreeMap<ActivityClass, usize> = BTreeMap::new();
        let mut classified = 0usize;
        let mut instances = 0usize;
        let mut kcal = 0.0;
        let mut alert_counts = BTreeMap::new();
        for e in &s.log {
            match e {
                LogEntry::History(h) if in_range(h.t, from, to) => {
                    instances += 1;
                    let bin = ((h.level / LEVEL_BIN_G) as usize).min(LEVEL_BINS - 1);
                    histogram[bin].1 += 1;
                    kcal += h.kcal_indicative;
                    if let Some(c) = h.class {
                        *classes.entry(c).or_default() += 1;
                        classified += 1;
                    }
                }
                LogEntry::Alert(a) if in_range(a.t, from, to) => {
                    *alert_counts.entry(a.kind()).or_default() += 1;
                }
                _ => {}
            }
        }
        let class_shares = full.then(|| {
            classes
                .into_iter()
                .map(|(c, n)| (c, n as f64 / classified.max(1) as f64))
                .collect()
        });
        Ok(DeviceStats {
            device_id: s.id.clone(),
            instances,
            level_histogram: histogram,
            class_shares,
            alert_counts,
            kcal,
            kcal_note: CALORIE_NOTE.to_string(),
        })
    }

    /// Raw bytes of a device's log file.
    pub fn log_bytes(&self, id: &str) -> ServiceResult<Vec<u8>> {
        lock(self.session(id)?).store.log_bytes()
    }

    pub fn security_level(&self, id: &str) -> ServiceResult<Option<SecurityLevel>> {
        Ok(self.device_status(id)?.stream.and_then(|s| s.security_level))
    }

    pub fn settings(&self) -> RuntimeSettings {
        let cfg = self.config();
        RuntimeSettings {
            monitor: cfg.monitor.clone(),
            security: cfg.security.clone(),
            privacy: cfg.devices.iter().map(|(id, d)| (id.clone(), d.privacy)).collect(),
        }
    }

    /// Validates and applies new runtime settings, persisting them and
    /// recording the change in every affected device's input log.
    pub fn update_settings(&self, new: RuntimeSettings) -> ServiceResult<RuntimeSettings> {
        let updated = {
            let mut cfg = self.config.write().unwrap_or_else(|p| p.into_inner());
            let mut candidate = cfg.clone();
            apply_settings(&mut candidate, &new)?;
            save_settings(&self.data_dir, &new)?;
            *cfg = candidate;
            cfg.clone()
        };
        for (id, m) in &self.sessions {
            let mut s = lock(m);
            let privacy = updated.devices[id].privacy;
            if s.config.privacy == privacy && s.monitor == updated.monitor && s.analytics.security == updated.security {
                continue;
            }
            s.commit(vec![StoredInput {
                seq: None,
                record: InputRecord::Settings {
                    privacy,
                    monitor: updated.monitor.clone(),
                    security: updated.security.clone(),
                },
            }])?;
        }
        Ok(self.settings())
    }

    /// Forces an index checkpoint on every device store.
    pub fn checkpoint(&self) -> ServiceResult<()> {
        for m in self.sessions.values() {
            lock(m).store.checkpoint()?;
        }
        Ok(())
    }
}

fn validate_security(s: &SecurityConfig) -> ServiceResult<()> {
    if !(0.0..=1.0).contains(&s.trusted_score) || !(s.stale_after > 0.0) {
        return Err(ServiceError::Config(
            "security.trusted_score must lie in [0, 1] and stale_after be positive".into(),
        ));
    }
    Ok(())
}

fn apply_settings(cfg: &mut AppConfig, new: &RuntimeSettings) -> ServiceResult<()> {
    new.monitor.validate()?;
    validate_security(&new.security)?;
    for id in new.privacy.keys() {
        if !cfg.devices.contains_key(id) {
            return Err(ServiceError::UnknownDevice(id.clone()));
        }
    }
    cfg.monitor = new.monitor.clone();
    cfg.security = new.security.clone();
    for (id, p) in &new.privacy {
        cfg.devices.get_mut(id).expect("checked above").privacy = *p;
    }
    Ok(())
}

fn load_settings(dir: &Path) -> ServiceResult<Option<RuntimeSettings>> {
    let path = dir.join(SETTINGS_FILE);
    match std::fs::read_to_string(&path) {
        Ok(t) => serde_json::from_str(&t)
            .map(Some)
            .map_err(|e| ServiceError::Corrupt(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ServiceError::io(path, e)),
    }
}

fn save_settings(dir: &Path, s: &RuntimeSettings) -> ServiceResult<()> {
    let path = dir.join(SETTINGS_FILE);
    let tmp = dir.join("settings.json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(s).expect("settings serialize"))
        .map_err(|e| ServiceError::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| ServiceError::io(path, e))
}
