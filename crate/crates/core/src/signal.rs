//! Raw acceleration signal types, high-pass preprocessing and windowing.
//!
//! Everything downstream of ingest works in units of g. Streams recorded in
//! m/s² are converted once with [`AccelStream::into_g`].

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity in m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Default high-pass cutoff in Hz.
pub const DEFAULT_CUTOFF_HZ: f64 = 0.5;

/// One timestamped tri-axial accelerometer reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl AccelSample {
    pub fn new(t: f64, ax: f64, ay: f64, az: f64) -> Self {
        Self { t, ax, ay, az }
    }

    pub fn magnitude(&self) -> f64 {
        magnitude(self)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.ax.is_finite() && self.ay.is_finite() && self.az.is_finite()
    }

    pub fn axes(&self) -> [f64; 3] {
        [self.ax, self.ay, self.az]
    }

    /// Multiplies every axis by `c`; unit conversion uses this.
    pub fn scaled(self, c: f64) -> Self {
        Self {
            t: self.t,
            ax: self.ax * c,
            ay: self.ay * c,
            az: self.az * c,
        }
    }
}

/// Euclidean norm of the acceleration vector.
pub fn magnitude(s: &AccelSample) -> f64 {
    (s.ax * s.ax + s.ay * s.ay + s.az * s.az).sqrt()
}

/// First difference of a magnitude series: `out[k] = mags[k + 1] - mags[k]`.
pub fn jerk_series(mags: &[f64]) -> Result<Vec<f64>> {
    if mags.len() < 2 {
        return Err(Error::EmptyInput("jerk needs at least two magnitudes"));
    }
    Ok(mags.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Acceleration unit declared by a stream header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "g")]
    G,
    #[serde(rename = "mps2")]
    MetersPerSecondSquared,
}

impl Unit {
    /// Factor that converts a value in this unit to g.
    pub fn to_g_factor(self) -> f64 {
        match self {
            Unit::G => 1.0,
            Unit::MetersPerSecondSquared => 1.0 / STANDARD_GRAVITY,
        }
    }
}

/// Result of checking the inter-sample gaps of a stream against its nominal rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingReport {
    pub expected_gap: f64,
    pub median_gap: f64,
    /// Number of individual gaps outside ±20% of the expected gap.
    pub irregular_gaps: usize,
}

impl SamplingReport {
    pub fn median_ok(&self) -> bool {
        (self.median_gap - self.expected_gap).abs() <= 0.2 * self.expected_gap
    }
}

/// A device's acceleration stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelStream {
    pub device_id: String,
    pub rate_hz: f64,
    pub unit: Unit,
    pub samples: Vec<AccelSample>,
}

impl AccelStream {
    /// Builds a stream, checking finiteness, the rate and strict time ordering.
    pub fn new(device_id: impl Into<String>, rate_hz: f64, unit: Unit, samples: Vec<AccelSample>) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::Parameter(format!("rate_hz must be > 0, got {rate_hz}")));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::Data(format!("sample {i} is not finite")));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::Stream(format!(
                    "timestamps not strictly increasing at sample {i} ({} after {})",
                    s.t,
                    samples[i - 1].t
                )));
            }
        }
        Ok(Self {
            device_id: device_id.into(),
            rate_hz,
            unit,
            samples,
        })
    }

    /// Converts the samples to g.
    pub fn into_g(mut self) -> Self {
        let c = self.unit.to_g_factor();
        if c != 1.0 {
            for s in &mut self.samples {
                *s = s.scaled(c);
            }
        }
        self.unit = Unit::G;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Start time of the first sample.
    pub fn t_start(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    /// End of the time span covered by the stream: last timestamp plus one period.
    pub fn t_end(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t + self.period())
    }

    pub fn duration(&self) -> f64 {
        match (self.t_start(), self.t_end()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(magnitude).collect()
    }

    pub fn sampling_report(&self) -> SamplingReport {
        let expected_gap = self.period();
        let mut gaps: Vec<f64> = self.samples.windows(2).map(|w| w[1].t - w[0].t).collect();
        let irregular_gaps = gaps
            .iter()
            .filter(|g| (**g - expected_gap).abs() > 0.2 * expected_gap)
            .count();
        let median_gap = if gaps.is_empty() {
            expected_gap
        } else {
            gaps.sort_by(f64::total_cmp);
            gaps[gaps.len() / 2]
        };
        SamplingReport {
            expected_gap,
            median_gap,
            irregular_gaps,
        }
    }
}

/// A sampled audio frame; amplitudes are in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioFrame {
    pub t_start: f64,
    pub rate_hz: f64,
    pub samples: Vec<f64>,
}

impl AudioFrame {
    pub fn new(t_start: f64, rate_hz: f64, samples: Vec<f64>) -> Result<Self> {
        let frame = Self {
            t_start,
            rate_hz,
            samples,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::Parameter(format!(
                "audio rate_hz must be > 0, got {}",
                self.rate_hz
            )));
        }
        if !self.t_start.is_finite() || self.samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data("audio frame contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration()
    }

    /// Copies the samples of `frames` that fall inside `[t0, t1)` into one frame.
    ///
    /// Frames must be time ordered and share a sampling rate; returns `None`
    /// when no sample falls in the interval.
    pub fn slice_span(frames: &[AudioFrame], t0: f64, t1: f64) -> Option<AudioFrame> {
        let rate = frames.first()?.rate_hz;
        let mut out = Vec::new();
        let mut start = None;
        for f in frames {
            if f.t_end() <= t0 || f.t_start >= t1 {
                continue;
            }
            let first = ((t0 - f.t_start) * f.rate_hz - 1e-9).ceil().max(0.0) as usize;
            let last = (((t1 - f.t_start) * f.rate_hz - 1e-9).ceil().max(0.0) as usize).min(f.samples.len());
            if first >= last {
                continue;
            }
            if start.is_none() {
                start = Some(f.t_start + first as f64 / f.rate_hz);
            }
            out.extend_from_slice(&f.samples[first..last]);
        }
        Some(AudioFrame {
            t_start: start?,
            rate_hz: rate,
            samples: out,
        })
    }
}

/// A contiguous, non-empty slice of a stream covering `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<'a> {
    pub t_start: f64,
    pub t_end: f64,
    pub samples: &'a [AccelSample],
}

impl<'a> Window<'a> {
    /// Wraps a whole sample slice; the window ends one `period` after its last sample.
    pub fn from_samples(samples: &'a [AccelSample], period: f64) -> Option<Self> {
        let first = samples.first()?;
        let last = samples.last()?;
        Some(Self {
            t_start: first.t,
            t_end: last.t + period,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(magnitude).collect()
    }
}

// Tolerance for placing float timestamps on window boundaries.
const TIME_EPS: f64 = 1e-9;

/// Cuts a stream into windows of `length_s` starting every `hop_s` seconds.
///
/// Windows start at the first timestamp and cover `[start, start + length)`;
/// a trailing window that would extend past the end of the stream is
/// dropped, as is any window that a sampling gap left empty.
pub fn make_windows(stream: &AccelStream, length_s: f64, hop_s: f64) -> Result<Vec<Window<'_>>> {
    if !(length_s > 0.0 && length_s.is_finite()) {
        return Err(Error::Parameter(format!("window length must be > 0, got {length_s}")));
    }
    if !(hop_s > 0.0 && hop_s.is_finite()) {
        return Err(Error::Parameter(format!("window hop must be > 0, got {hop_s}")));
    }
    let (Some(t0), Some(end)) = (stream.t_start(), stream.t_end()) else {
        return Ok(Vec::new());
    };
    let samples = &stream.samples;
    let mut out = Vec::new();
    for k in 0.. {
        let start = t0 + k as f64 * hop_s;
        let stop = start + length_s;
        if stop > end + TIME_EPS {
            break;
        }
        let lo = samples.partition_point(|s| s.t < start - TIME_EPS);
        let hi = samples.partition_point(|s| s.t < stop - TIME_EPS);
        if lo < hi {
            out.push(Window {
                t_start: start,
                t_end: stop,
                samples: &samples[lo..hi],
            });
        }
    }
    Ok(out)
}

/// Second-order Butterworth high-pass coefficients (bilinear transform,
/// cutoff pre-warped), normalised so that `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighPassCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl HighPassCoefficients {
    pub fn butterworth(cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::Parameter(format!("rate_hz must be > 0, got {rate_hz}")));
        }
        let nyquist = rate_hz / 2.0;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
            return Err(Error::Parameter(format!(
                "cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz"
            )));
        }
        let k = (PI * cutoff_hz / rate_hz).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        Ok(Self {
            b0: norm,
            b1: -2.0 * norm,
            b2: norm,
            a1: 2.0 * (k2 - 1.0) * norm,
            a2: (1.0 - SQRT_2 * k + k2) * norm,
        })
    }
}

/// Single-channel biquad high-pass in transposed direct form II.
///
/// The state is primed from the first input so that a constant input produces
/// exactly zero output from the first sample on. Any other start-up content
/// decays with the filter's time constant: about `1.4 / cutoff_hz` seconds
/// to fall below 1% (≈ 2.7 s at the 0.5 Hz default).
#[derive(Debug, Clone, PartialEq)]
pub struct HighPass {
    coeffs: HighPassCoefficients,
    s1: f64,
    s2: f64,
    primed: bool,
}

impl HighPass {
    pub fn new(cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        Ok(Self::with_coefficients(HighPassCoefficients::butterworth(
            cutoff_hz, rate_hz,
        )?))
    }

    pub fn with_coefficients(coeffs: HighPassCoefficients) -> Self {
        Self {
            coeffs,
            s1: 0.0,
            s2: 0.0,
            primed: false,
        }
    }

    pub fn coefficients(&self) -> HighPassCoefficients {
        self.coeffs
    }

    /// Forgets all history; the next input re-primes the state.
    pub fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
        self.primed = false;
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let c = &self.coeffs;
        if !self.primed {
            // Steady state for a constant input x with zero output.
            self.s2 = c.b2 * x;
            self.s1 = c.b1 * x + self.s2;
            self.primed = true;
        }
        let y = c.b0 * x + self.s1;
        self.s1 = c.b1 * x - c.a1 * y + self.s2;
        self.s2 = c.b2 * x - c.a2 * y;
        y
    }
}

/// Three identical high-pass channels, one per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisFilter {
    axes: [HighPass; 3],
}

impl AxisFilter {
    pub fn new(cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        let hp = HighPass::new(cutoff_hz, rate_hz)?;
        Ok(Self {
            axes: [hp.clone(), hp.clone(), hp],
        })
    }

    pub fn reset(&mut self) {
        self.axes.iter_mut().for_each(HighPass::reset);
    }

    pub fn process(&mut self, s: &AccelSample) -> AccelSample {
        AccelSample {
            t: s.t,
            ax: self.axes[0].process(s.ax),
            ay: self.axes[1].process(s.ay),
            az: self.axes[2].process(s.az),
        }
    }
}

/// High-pass filters each axis of `stream` independently.
pub fn high_pass(stream: &AccelStream, cutoff_hz: f64) -> Result<AccelStream> {
    let mut filter = AxisFilter::new(cutoff_hz, stream.rate_hz)?;
    Ok(AccelStream {
        device_id: stream.device_id.clone(),
        rate_hz: stream.rate_hz,
        unit: stream.unit,
        samples: stream.samples.iter().map(|s| filter.process(s)).collect(),
    })
}

/// High-passes the magnitude series of `stream` (gravity-free magnitude).
///
/// Unlike the magnitude of a high-passed vector, this keeps the sign of the
/// oscillation around 1 g, so a bounce of amplitude `A` along gravity shows
/// up as a peak-to-valley swing of `2A`.
pub fn high_passed_magnitude(stream: &AccelStream, cutoff_hz: f64) -> Result<Vec<f64>> {
    let mut hp = HighPass::new(cutoff_hz, stream.rate_hz)?;
    Ok(stream.samples.iter().map(|s| hp.process(magnitude(s))).collect())
}
