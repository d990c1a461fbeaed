//! Newline-delimited JSON trace files.
//!
//! A trace starts with a header record
//! `{"device_id": ..., "rate_hz": ..., "unit": "g"|"mps2"}` followed by one
//! `{"t": ..., "ax": ..., "ay": ..., "az": ...}` record per sample. Audio
//! lives in a side file with one `{"t_start": ..., "rate_hz": ..., "samples": [...]}`
//! record per frame.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{AccelSample, AccelStream, AudioFrame, Unit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub device_id: String,
    pub rate_hz: f64,
    pub unit: Unit,
}

impl TraceHeader {
    pub fn of(stream: &AccelStream) -> Self {
        Self {
            device_id: stream.device_id.clone(),
            rate_hz: stream.rate_hz,
            unit: stream.unit,
        }
    }
}

fn parse_line<T: for<'de> Deserialize<'de>>(line: &str, lineno: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        msg: e.to_string(),
    })
}

/// Parses a whole trace from text.
pub fn parse_trace(text: &str) -> Result<AccelStream> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (n, first) = lines.next().ok_or(Error::EmptyInput("trace has no header"))?;
    let header: TraceHeader = parse_line(first, n + 1)?;
    let samples = lines
        .map(|(n, l)| parse_line::<AccelSample>(l, n + 1))
        .collect::<Result<Vec<_>>>()?;
    AccelStream::new(header.device_id, header.rate_hz, header.unit, samples)
}

pub fn read_trace(path: &Path) -> Result<AccelStream> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text)
}

pub fn write_trace_to<W: Write>(mut w: W, stream: &AccelStream) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, &TraceHeader::of(stream))?;
    w.write_all(b"\n")?;
    for s in &stream.samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_trace(path: &Path, stream: &AccelStream) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_to(BufWriter::new(f), stream).map_err(|e| Error::io(path, e))
}

pub fn read_audio(path: &Path) -> Result<Vec<AudioFrame>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut frames = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: AudioFrame = parse_line(&line, n + 1)?;
        frame.validate()?;
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_audio_to<W: Write>(mut w: W, frames: &[AudioFrame]) -> std::io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_audio(path: &Path, frames: &[AudioFrame]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_audio_to(BufWriter::new(f), frames).map_err(|e| Error::io(path, e))
}

/// One element of a time-merged accelerometer/audio sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    Sample(AccelSample),
    Audio(AudioFrame),
}

/// Canonical delivery order for a trace with audio: each audio frame goes
/// out just before the first sample at or after its start time. Offline
/// processing and live replay both use this order.
pub fn merge_records(stream: &AccelStream, frames: &[AudioFrame]) -> Vec<TraceRecord> {
    let mut out = Vec::with_capacity(stream.samples.len() + frames.len());
    let mut fi = 0;
    for s in &stream.samples {
        while fi < frames.len() && frames[fi].t_start <= s.t {
            out.push(TraceRecord::Audio(frames[fi].clone()));
            fi += 1;
        }
        out.push(TraceRecord::Sample(*s));
    }
    out.extend(frames[fi..].iter().cloned().map(TraceRecord::Audio));
    out
}
