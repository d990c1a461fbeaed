//! Durable per-device state: three append-only JSON-lines files plus an
//! index checkpoint.
//!
//! * `input.jsonl`: every accepted input record with its sequence number,
//!   already converted to g. Replaying it rebuilds the pipeline.
//! * `log.jsonl`: the pipeline output, one [`LogEntry`] per line.
//! * `acks.jsonl`: alert acknowledgements. Kept apart so the log stays a
//!   pure function of the input.
//! * `index.json`: line and byte counts of the first two files as of the
//!   last checkpoint. Files may grow past it; shrinking below it is
//!   corruption. A torn final line (no newline) is discarded on open.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use activitymon_core::auth::SecurityConfig;
use activitymon_core::{AccelSample, AudioFrame, Unit};
use serde::{Deserialize, Serialize};

use crate::config::{MonitorConfig, PrivacyMode};
use crate::error::{ServiceError, ServiceResult};
use crate::records::LogEntry;

pub const INPUT_FILE: &str = "input.jsonl";
pub const LOG_FILE: &str = "log.jsonl";
pub const ACKS_FILE: &str = "acks.jsonl";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputRecord {
    Header {
        rate_hz: f64,
        unit: Unit,
    },
    Sample(AccelSample),
    Audio(AudioFrame),
    /// Server-side settings change; applies to later records.
    Settings {
        privacy: PrivacyMode,
        monitor: MonitorConfig,
        security: SecurityConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredInput {
    /// Device sequence number; absent for server-side records.
    pub seq: Option<u64>,
    #[serde(flatten)]
    pub record: InputRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acknowledgement {
    /// Position of the alert in the device log.
    pub index: usize,
    pub note: String,
    /// Wall-clock seconds since the Unix epoch.
    pub at_unix: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub input_lines: usize,
    pub input_bytes: u64,
    pub log_lines: usize,
    pub log_bytes: u64,
    pub last_seq: Option<u64>,
}

/// Everything read back from disk.
#[derive(Debug, Clone, Default)]
pub struct StoredDevice {
    pub inputs: Vec<StoredInput>,
    pub log: Vec<LogEntry>,
    pub acks: Vec<Acknowledgement>,
}

#[derive(Debug)]
pub struct DeviceStore {
    dir: PathBuf,
    input: File,
    log: File,
    acks: File,
    index: StoreIndex,
    since_checkpoint: usize,
    checkpoint_every: usize,
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> ServiceResult<(Vec<T>, u64)> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(ServiceError::io(path, e)),
    };
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    let mut out = Vec::new();
    for (i, line) in text[..complete].lines().enumerate() {
        out.push(
            serde_json::from_str(line)
                .map_err(|e| ServiceError::Corrupt(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok((out, complete as u64))
}

fn truncate_to(path: &Path, len: u64) -> ServiceResult<()> {
    if path.exists() {
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| ServiceError::io(path, e))?;
        f.set_len(len).map_err(|e| ServiceError::io(path, e))?;
    }
    Ok(())
}

fn append_handle(path: &Path) -> ServiceResult<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ServiceError::io(path, e))
}

impl DeviceStore {
    /// Opens (creating if needed) the store under `dir` and reads it back.
    pub fn open(dir: &Path, checkpoint_every: usize) -> ServiceResult<(Self, StoredDevice)> {
        fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir, e))?;
        let index_path = dir.join(INDEX_FILE);
        let index: StoreIndex = match fs::read_to_string(&index_path) {
            Ok(t) => serde_json::from_str(&t).map_err(|e| ServiceError::Corrupt(format!("index: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => StoreIndex::default(),
            Err(e) => return Err(ServiceError::io(&index_path, e)),
        };
        let (inputs, input_bytes): (Vec<StoredInput>, _) = read_lines(&dir.join(INPUT_FILE))?;
        let (log, log_bytes): (Vec<LogEntry>, _) = read_lines(&dir.join(LOG_FILE))?;
        let (acks, acks_bytes): (Vec<Acknowledgement>, _) = read_lines(&dir.join(ACKS_FILE))?;
        if inputs.len() < index.input_lines
            || input_bytes < index.input_bytes
            || log.len() < index.log_lines
            || log_bytes < index.log_bytes
        {
            return Err(ServiceError::Corrupt(format!(
                "{} holds less than its last checkpoint",
                dir.display()
            )));
        }
        truncate_to(&dir.join(INPUT_FILE), input_bytes)?;
        truncate_to(&dir.join(LOG_FILE), log_bytes)?;
        truncate_to(&dir.join(ACKS_FILE), acks_bytes)?;
        let index = StoreIndex {
            input_lines: inputs.len(),
            input_bytes,
            log_lines: log.len(),
            log_bytes,
            last_seq: inputs.iter().filter_map(|i| i.seq).next_back(),
        };
        let store = Self {
            input: append_handle(&dir.join(INPUT_FILE))?,
            log: append_handle(&dir.join(LOG_FILE))?,
            acks: append_handle(&dir.join(ACKS_FILE))?,
            dir: dir.to_path_buf(),
            index,
            since_checkpoint: 0,
            checkpoint_every: checkpoint_every.max(1),
        };
        Ok((store, StoredDevice { inputs, log, acks }))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn index(&self) -> StoreIndex {
        self.index
    }

    fn write(file: &mut File, path: &Path, text: &str) -> ServiceResult<()> {
        file.write_all(text.as_bytes()).map_err(|e| ServiceError::io(path, e))
    }

    /// Appends accepted inputs and the log entries they produced.
    pub fn append(&mut self, inputs: &[StoredInput], entries: &[LogEntry]) -> ServiceResult<()> {
        let mut text = String::new();
        for i in inputs {
            text.push_str(&serde_json::to_string(i).expect("inputs always serialize"));
            text.push('\n');
        }
        Self::write(&mut self.input, &self.dir.join(INPUT_FILE), &text)?;
        self.index.input_lines += inputs.len();
        self.index.input_bytes += text.len() as u64;
        if let Some(seq) = inputs.iter().filter_map(|i| i.seq).next_back() {
            self.index.last_seq = Some(seq);
        }

        let text = crate::pipeline::log_text(entries);
        Self::write(&mut self.log, &self.dir.join(LOG_FILE), &text)?;
        self.index.log_lines += entries.len();
        self.index.log_bytes += text.len() as u64;

        self.since_checkpoint += inputs.len() + entries.len();
        if self.since_checkpoint >= self.checkpoint_every {
            self.checkpoint()?;
        }
        Ok(())
    }

    /// Appends log entries not tied to new input (recovery of a lost tail).
    pub fn append_log(&mut self, entries: &[LogEntry]) -> ServiceResult<()> {
        self.append(&[], entries)
    }

    pub fn append_ack(&mut self, ack: &Acknowledgement) -> ServiceResult<()> {
        let mut line = serde_json::to_string(ack).expect("acks always serialize");
        line.push('\n');
        Self::write(&mut self.acks, &self.dir.join(ACKS_FILE), &line)
    }

    /// Writes the index atomically (temp file, then rename).
    pub fn checkpoint(&mut self) -> ServiceResult<()> {
        for (f, name) in [(&mut self.input, INPUT_FILE), (&mut self.log, LOG_FILE)] {
            f.sync_data().map_err(|e| ServiceError::io(self.dir.join(name), e))?;
        }
        let tmp = self.dir.join("index.json.tmp");
        let path = self.dir.join(INDEX_FILE);
        fs::write(&tmp, serde_json::to_vec(&self.index).expect("index serializes"))
            .map_err(|e| ServiceError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| ServiceError::io(&path, e))?;
        self.since_checkpoint = 0;
        Ok(())
    }

    /// Raw bytes of the device log, as written.
    pub fn log_bytes(&self) -> ServiceResult<Vec<u8>> {
        let path = self.dir.join(LOG_FILE);
        fs::read(&path).map_err(|e| ServiceError::io(path, e))
    }
}
