use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{add_click, clamp_audio, frame_audio, gaussian, rng, sample, Rotation, AUDIO_RATE_HZ};
use crate::error::{Error, Result};
use crate::signal::{AccelSample, AccelStream, AudioFrame, Unit, STANDARD_GRAVITY};

/// Duration of an unobstructed drop from `height_m`.
pub fn free_fall_duration(height_m: f64) -> f64 {
    (2.0 * height_m / STANDARD_GRAVITY).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "after", rename_all = "kebab-case")]
pub enum PostImpact {
    /// The phone stays where it landed.
    Abandoned,
    /// Walking resumes this many seconds after the impact.
    PickedUpAfter { seconds: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FallGenSpec {
    pub height_m: f64,
    pub impact_g: f64,
    pub post_impact: PostImpact,
    pub click_amplitude: f64,
    /// Walking-in-hand time before the drop.
    pub carry_s: f64,
    /// Trace time after the impact.
    pub after_s: f64,
    pub rate_hz: f64,
    pub audio_rate_hz: f64,
    pub seed: u64,
}

impl Default for FallGenSpec {
    fn default() -> Self {
        Self {
            height_m: 0.75,
            impact_g: 3.0,
            post_impact: PostImpact::Abandoned,
            click_amplitude: 0.7,
            carry_s: 3.0,
            after_s: 12.0,
            rate_hz: 50.0,
            audio_rate_hz: AUDIO_RATE_HZ,
            seed: 0,
        }
    }
}

impl FallGenSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.height_m > 0.0) {
            return Err(Error::Parameter(format!(
                "drop height must be positive, got {}",
                self.height_m
            )));
        }
        if !(self.impact_g > 1.0) || !(self.click_amplitude >= 0.0) || self.click_amplitude > 1.0 {
            return Err(Error::Parameter(
                "impact must exceed 1 g and click lie in [0, 1]".into(),
            ));
        }
        if !(self.carry_s > 0.0 && self.after_s > 0.0 && self.rate_hz > 0.0 && self.audio_rate_hz > 0.0) {
            return Err(Error::Parameter("durations and rates must be positive".into()));
        }
        if let PostImpact::PickedUpAfter { seconds } = self.post_impact {
            if !(seconds >= 0.0) {
                return Err(Error::Parameter("pickup delay must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Ground-truth event times of a generated fall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallTruth {
    pub t_freefall: f64,
    /// Time of the impact sample; the free fall ends here.
    pub t_impact: f64,
    pub post_impact: PostImpact,
}

impl FallTruth {
    pub fn free_fall_duration(&self) -> f64 {
        self.t_impact - self.t_freefall
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrace {
    pub stream: AccelStream,
    pub audio: Vec<AudioFrame>,
    pub truth: Option<FallTruth>,
}

// Walking with the phone in hand.
const CARRY_HZ: f64 = 1.8;
const CARRY_G: f64 = 0.2;
const SENSOR_NOISE_G: f64 = 0.01;
const FLOOR_NOISE_G: f64 = 0.003;
const AMBIENT_AUDIO: f64 = 0.01;
const IMPACT_DECAY_S: f64 = 0.03;

fn walking(t: f64, freq: f64, amp: f64, phase: f64) -> [f64; 3] {
    let w = 2.0 * PI * freq * t + phase;
    [
        0.3 * amp * (0.5 * w).sin(),
        0.4 * amp * (w + 0.8).sin(),
        1.0 + amp * (w.sin() + 0.2 * (2.0 * w).sin()),
    ]
}

/// Generates a drop: carry, free fall, impact, then rest or pickup.
pub fn gen_fall_trace(spec: &FallGenSpec, device_id: &str) -> Result<SynthTrace> {
    spec.validate()?;
    let mut r = rng(spec.seed);
    let hand = Rotation::random(&mut r, 25f64.to_radians());
    let floor = Rotation::any(&mut r);
    let phase = r.random_range(0.0..2.0 * PI);
    let carry_noise = gaussian(SENSOR_NOISE_G);
    let floor_noise = gaussian(FLOOR_NOISE_G);
    let period = 1.0 / spec.rate_hz;
    let t_freefall = spec.carry_s;
    let fall_s = free_fall_duration(spec.height_m);
    // The impact lands on the first sample at or after the end of the fall.
    let impact_index = ((t_freefall + fall_s) * spec.rate_hz - 1e-9).ceil() as usize;
    let t_impact = impact_index as f64 * period;
    let end_index = impact_index + (spec.after_s * spec.rate_hz).round() as usize;
    let pickup = match spec.post_impact {
        PostImpact::Abandoned => f64::INFINITY,
        PostImpact::PickedUpAfter { seconds } => t_impact + seconds,
    };

    let mut samples = Vec::with_capacity(end_index);
    for i in 0..end_index {
        let t = i as f64 * period;
        let s = if t < t_freefall {
            sample(t, &hand, walking(t, CARRY_HZ, CARRY_G, phase), &carry_noise, &mut r)
        } else if i < impact_index {
            sample(t, &hand, [0.0; 3], &carry_noise, &mut r)
        } else if t >= pickup {
            sample(t, &hand, walking(t, 2.0, 0.3, phase), &carry_noise, &mut r)
        } else {
            let spike = (spec.impact_g - 1.0) * (-(t - t_impact) / IMPACT_DECAY_S).exp();
            sample(t, &floor, [0.0, 0.0, 1.0 + spike], &floor_noise, &mut r)
        };
        samples.push(s);
    }

    let duration = end_index as f64 * period;
    let mut audio = ambient(&mut r, spec.audio_rate_hz, duration, AMBIENT_AUDIO);
    let tone = r.random_range(200.0..500.0);
    add_click(
        &mut audio,
        spec.audio_rate_hz,
        t_impact,
        spec.click_amplitude,
        tone,
        &mut r,
    );
    clamp_audio(&mut audio);
    Ok(SynthTrace {
        stream: AccelStream::new(device_id, spec.rate_hz, Unit::G, samples)?,
        audio: frame_audio(0.0, spec.audio_rate_hz, audio),
        truth: Some(FallTruth {
            t_freefall,
            t_impact,
            post_impact: spec.post_impact,
        }),
    })
}

pub(crate) fn ambient(r: &mut impl Rng, rate_hz: f64, duration: f64, std: f64) -> Vec<f64> {
    let noise = gaussian(std);
    (0..(duration * rate_hz).round() as usize)
        .map(|_| noise.sample(r))
        .collect()
}

/// Everyday handling that must not raise an alarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EverydayKind {
    Walk,
    Jog,
    Stairs,
    Lift,
    SitDown,
    /// The phone is put down hard on a table.
    SetDown,
}

impl EverydayKind {
    pub const ALL: [EverydayKind; 6] = [
        EverydayKind::Walk,
        EverydayKind::Jog,
        EverydayKind::Stairs,
        EverydayKind::Lift,
        EverydayKind::SitDown,
        EverydayKind::SetDown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EverydayKind::Walk => "walk",
            EverydayKind::Jog => "jog",
            EverydayKind::Stairs => "stairs",
            EverydayKind::Lift => "lift",
            EverydayKind::SitDown => "sit-down",
            EverydayKind::SetDown => "set-down",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EverydaySpec {
    pub kind: EverydayKind,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub audio_rate_hz: f64,
    pub seed: u64,
}

impl EverydaySpec {
    pub fn new(kind: EverydayKind, seed: u64) -> Self {
        Self {
            kind,
            duration_s: 15.0,
            rate_hz: 50.0,
            audio_rate_hz: AUDIO_RATE_HZ,
            seed,
        }
    }
}

fn bump(t: f64, at: f64, height: f64, tau: f64) -> f64 {
    if t < at {
        0.0
    } else {
        height * (-(t - at) / tau).exp()
    }
}

/// Generates an everyday trace with no fall in it.
pub fn gen_everyday_trace(spec: &EverydaySpec, device_id: &str) -> Result<SynthTrace> {
    if !(spec.duration_s > 0.0 && spec.rate_hz > 0.0 && spec.audio_rate_hz > 0.0) {
        return Err(Error::Parameter("durations and rates must be positive".into()));
    }
    let mut r = rng(spec.seed);
    let rot = Rotation::random(&mut r, 25f64.to_radians());
    let phase = r.random_range(0.0..2.0 * PI);
    let jitter: f64 = r.random_range(0.85..1.15);
    let noise = gaussian(SENSOR_NOISE_G);
    let n = (spec.duration_s * spec.rate_hz).round() as usize;
    let period = 1.0 / spec.rate_hz;
    let mut clicks: Vec<(f64, f64)> = Vec::new();

    let event_t = r.random_range(0.3..0.6) * spec.duration_s;
    let (sit_g, set_g) = (r.random_range(0.3..0.7), r.random_range(0.8..1.8));
    let lift_dir = if r.random_bool(0.5) { 1.0 } else { -1.0 };
    let table = Rotation::tilt(r.random_range(-0.05..0.05), r.random_range(-0.05..0.05));
    let step_hz = match spec.kind {
        EverydayKind::Walk => 2.0 * jitter,
        EverydayKind::Jog => 2.8 * jitter,
        EverydayKind::Stairs => 1.6 * jitter,
        _ => 1.8 * jitter,
    };
    let step_click = |t: f64| (t * step_hz + phase / (2.0 * PI)).fract();

    let mut samples = Vec::with_capacity(n);
    let mut last_step = 1.0;
    for i in 0..n {
        let t = i as f64 * period;
        let (r_now, world) = match spec.kind {
            EverydayKind::Walk => (rot, walking(t, step_hz, 0.3 * jitter, phase)),
            EverydayKind::Jog => (rot, walking(t, step_hz, 0.65 * jitter, phase)),
            EverydayKind::Stairs => {
                let mut w = walking(t, step_hz, 0.35 * jitter, phase);
                let since = step_click(t) / step_hz;
                w[2] += 0.35 * (-since / 0.04).exp();
                (rot, w)
            }
            EverydayKind::Lift => {
                // Accelerate for 1.5 s, cruise, decelerate for 1.5 s.
                let a = 0.08 * jitter * lift_dir;
                let v = if (event_t..event_t + 1.5).contains(&t) {
                    a
                } else if (event_t + 6.0..event_t + 7.5).contains(&t) {
                    -a
                } else {
                    0.0
                };
                (rot, [0.0, 0.0, 1.0 + v])
            }
            EverydayKind::SitDown => {
                if t < event_t {
                    (rot, walking(t, step_hz, 0.3 * jitter, phase))
                } else {
                    let sway = 0.02 * (2.0 * PI * 0.3 * t).sin();
                    (rot, [sway, 0.0, 1.0 + bump(t, event_t, sit_g, 0.08)])
                }
            }
            EverydayKind::SetDown => {
                if t < event_t - 0.2 {
                    let sway = 0.03 * (2.0 * PI * 0.7 * t + phase).sin();
                    (rot, [sway, 0.0, 1.0 + sway])
                } else if t < event_t {
                    // Lowering the phone briskly; well above free fall.
                    (rot, [0.0, 0.0, 0.7])
                } else {
                    (table, [0.0, 0.0, 1.0 + bump(t, event_t, set_g, IMPACT_DECAY_S)])
                }
            }
        };
        let stepping = matches!(spec.kind, EverydayKind::Walk | EverydayKind::Jog | EverydayKind::Stairs)
            || (spec.kind == EverydayKind::SitDown && t < event_t);
        let cycle = step_click(t);
        if stepping && cycle < last_step {
            clicks.push((t, 0.05 * jitter));
        }
        last_step = cycle;
        samples.push(sample(t, &r_now, world, &noise, &mut r));
    }
    if spec.kind == EverydayKind::SetDown {
        let at = (event_t * spec.rate_hz).ceil() * period;
        clicks.push((at, r.random_range(0.2..0.6)));
    }

    let mut audio = ambient(&mut r, spec.audio_rate_hz, n as f64 * period, AMBIENT_AUDIO);
    let tone = r.random_range(200.0..500.0);
    for (t, a) in clicks {
        add_click(&mut audio, spec.audio_rate_hz, t, a, tone, &mut r);
    }
    clamp_audio(&mut audio);
    Ok(SynthTrace {
        stream: AccelStream::new(device_id, spec.rate_hz, Unit::G, samples)?,
        audio: frame_audio(0.0, spec.audio_rate_hz, audio),
        truth: None,
    })
}

/// Index of the largest-norm sample.
pub(crate) fn peak_index(samples: &[AccelSample]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in samples.iter().enumerate() {
        let m = s.magnitude();
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((i, m));
        }
    }
    best.map(|(i, _)| i)
}
