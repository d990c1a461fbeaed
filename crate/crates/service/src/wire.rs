//! Ingest wire format: one JSON object per line, each carrying the device id,
//! a per-device sequence number and the device token next to a trace record.
//!
//! ```text
//! {"device_id":"phone-1","seq":0,"token":"s3","rate_hz":50,"unit":"g"}
//! {"device_id":"phone-1","seq":1,"token":"s3","t":0.0,"ax":0.01,"ay":0.0,"az":1.0}
//! {"device_id":"phone-1","seq":2,"token":"s3","t_start":0.0,"rate_hz":8000,"samples":[0.0, 0.01]}
//! ```

use activitymon_core::{AccelSample, AudioFrame, Unit};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

/// Body of a wire line or a snapshot line. Variant order matters for
/// untagged matching: audio frames also carry `rate_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireBody {
    Audio(AudioFrame),
    Header { rate_hz: f64, unit: Unit },
    Sample(AccelSample),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestLine {
    pub device_id: String,
    pub seq: u64,
    pub token: String,
    #[serde(flatten)]
    pub body: WireBody,
}

impl IngestLine {
    pub fn parse(line: &str) -> ServiceResult<Self> {
        serde_json::from_str(line).map_err(|e| ServiceError::Malformed(e.to_string()))
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire lines always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AckStatus {
    Ok,
    /// Sequence number already seen; nothing was done.
    Duplicate,
    Error,
}

/// Reply to one wire line or one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: Option<u64>,
    pub status: AckStatus,
    /// Log entries the record produced.
    pub entries: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl Ack {
    pub fn ok(seq: u64, entries: usize) -> Self {
        Self {
            seq: Some(seq),
            status: AckStatus::Ok,
            entries,
            error: None,
        }
    }

    pub fn duplicate(seq: u64) -> Self {
        Self {
            seq: Some(seq),
            status: AckStatus::Duplicate,
            entries: 0,
            error: None,
        }
    }

    pub fn error(seq: Option<u64>, e: &ServiceError) -> Self {
        Self {
            seq,
            status: AckStatus::Error,
            entries: 0,
            error: Some(e.to_string()),
        }
    }
}

/// A parsed snapshot upload: a whole trace file, optionally with audio
/// frames on extra lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: Option<(String, f64, Unit)>,
    pub samples: Vec<AccelSample>,
    pub audio: Vec<AudioFrame>,
}

#[derive(Deserialize)]
struct SnapshotHeader {
    device_id: String,
    rate_hz: f64,
    unit: Unit,
}

impl Snapshot {
    /// Parses and time-sorts the upload. The header line is optional when
    /// the device already streams.
    pub fn parse(text: &str) -> ServiceResult<Self> {
        let mut header = None;
        let mut samples = Vec::new();
        let mut audio = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |e: serde_json::Error| ServiceError::Malformed(format!("line {}: {e}", i + 1));
            if i == 0 && line.contains("\"device_id\"") {
                let h: SnapshotHeader = serde_json::from_str(line).map_err(bad)?;
                header = Some((h.device_id, h.rate_hz, h.unit));
                continue;
            }
            match serde_json::from_str::<WireBody>(line).map_err(bad)? {
                WireBody::Sample(s) if s.is_finite() => samples.push(s),
                WireBody::Sample(_) => {
                    return Err(ServiceError::Malformed(format!("line {}: non-finite sample", i + 1)));
                }
                WireBody::Audio(f) => {
                    f.validate()
                        .map_err(|e| ServiceError::Malformed(format!("line {}: {e}", i + 1)))?;
                    audio.push(f)
                }
                WireBody::Header { .. } => {
                    return Err(ServiceError::Malformed(format!(
                        "line {}: header must come first",
                        i + 1
                    )));
                }
            }
        }
        // Out-of-order delivery inside one snapshot is repaired here.
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        if samples.windows(2).any(|w| w[0].t == w[1].t) {
            return Err(ServiceError::Malformed("snapshot repeats a timestamp".into()));
        }
        audio.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        Ok(Self { header, samples, audio })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_body_kind() {
        let h = IngestLine::parse(r#"{"device_id":"d","seq":0,"token":"k","rate_hz":50,"unit":"g"}"#).unwrap();
        assert_eq!(
            h.body,
            WireBody::Header {
                rate_hz: 50.0,
                unit: Unit::G
            }
        );
        let s = IngestLine::parse(r#"{"device_id":"d","seq":1,"token":"k","t":0.5,"ax":1,"ay":2,"az":3}"#).unwrap();
        assert_eq!(s.body, WireBody::Sample(AccelSample::new(0.5, 1.0, 2.0, 3.0)));
        let a =
            IngestLine::parse(r#"{"device_id":"d","seq":2,"token":"k","t_start":1,"rate_hz":8000,"samples":[0.5]}"#)
                .unwrap();
        assert!(matches!(a.body, WireBody::Audio(_)));
        assert_eq!(IngestLine::parse(&a.to_line()).unwrap(), a);
    }

    #[test]
    fn malformed_lines_rejected() {
        for bad in [
            "not json",
            r#"{"device_id":"d","seq":1,"token":"k","t":0.5}"#,
            r#"{"device_id":"d","token":"k","t":0.5,"ax":1,"ay":2,"az":3}"#,
        ] {
            assert!(
                matches!(IngestLine::parse(bad), Err(ServiceError::Malformed(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn snapshot_resorted() {
        let text = "{\"device_id\":\"d\",\"rate_hz\":5,\"unit\":\"g\"}\n\
                    {\"t\":0.4,\"ax\":0,\"ay\":0,\"az\":1}\n\
                    {\"t\":0.2,\"ax\":0,\"ay\":0,\"az\":1}\n\
                    {\"t_start\":0,\"rate_hz\":10,\"samples\":[0.1]}\n";
        let s = Snapshot::parse(text).unwrap();
        assert_eq!(s.header.as_ref().unwrap().1, 5.0);
        assert_eq!(s.samples.iter().map(|x| x.t).collect::<Vec<_>>(), vec![0.2, 0.4]);
        assert_eq!(s.audio.len(), 1);
        assert!(
            Snapshot::parse("{\"t\":0.4,\"ax\":0,\"ay\":0,\"az\":1}\n{\"t\":0.4,\"ax\":0,\"ay\":0,\"az\":1}").is_err()
        );
    }
}
