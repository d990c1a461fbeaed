use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::fall::ambient;
use super::{add_click, clamp_audio, frame_audio, gaussian, rng, sample, Rotation, AUDIO_RATE_HZ};
use crate::error::{Error, Result};
use crate::signal::{AccelStream, AudioFrame, Unit};

/// A user's walking signature.
///
/// Axes are lateral, forward and vertical; the lateral sway runs at half the
/// step frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitProfile {
    pub user_id: String,
    pub step_hz: f64,
    pub amplitude_g: [f64; 3],
    /// Phase of the lateral and forward components relative to the vertical one (rad).
    pub phase: [f64; 2],
    pub harmonic_ratio: f64,
    /// Standard deviation of the per-step phase drift (rad).
    pub phase_jitter: f64,
    pub click_amplitude: f64,
    pub noise_floor: f64,
    /// Habitual roll and pitch of the phone in the pocket (degrees).
    pub carry_tilt_deg: [f64; 2],
}

impl GaitProfile {
    pub fn validate(&self) -> Result<()> {
        let values = [
            self.step_hz,
            self.amplitude_g[0],
            self.amplitude_g[1],
            self.amplitude_g[2],
            self.harmonic_ratio,
            self.phase_jitter,
            self.click_amplitude,
            self.noise_floor,
        ];
        if self.carry_tilt_deg.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "profile {} has a non-finite tilt",
                self.user_id
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Parameter(format!(
                "profile {} has a negative parameter",
                self.user_id
            )));
        }
        if self.step_hz == 0.0 || self.amplitude_g.iter().all(|a| *a == 0.0) {
            return Err(Error::Parameter(format!("profile {} does not move", self.user_id)));
        }
        Ok(())
    }

    /// Parameters compared when checking that two users are distinct.
    fn comparable(&self) -> [f64; 6] {
        [
            self.step_hz,
            self.amplitude_g[0],
            self.amplitude_g[1],
            self.amplitude_g[2],
            self.harmonic_ratio,
            self.click_amplitude,
        ]
    }
}

/// Nine profiles laid out on a Latin square so every pair differs by at
/// least 20% in at least two parameters.
pub fn default_profiles() -> Vec<GaitProfile> {
    let vertical = [0.22, 0.30, 0.40];
    let lateral = [0.07, 0.10, 0.14];
    let forward = [0.10, 0.14, 0.19];
    let step = [1.6, 1.95, 2.35];
    let mut out = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            let l = (i + j) % 3;
            let f = (2 * i + j) % 3;
            let c = (i + 2 * j) % 3;
            out.push(GaitProfile {
                user_id: format!("user-{}", 3 * i + j + 1),
                step_hz: step[l],
                amplitude_g: [lateral[l], forward[f], vertical[j]],
                phase: [0.4 + 0.5 * i as f64, 0.3 + 0.6 * j as f64],
                harmonic_ratio: [0.1, 0.2, 0.3][i],
                phase_jitter: 0.05,
                click_amplitude: [0.08, 0.12, 0.17][c],
                noise_floor: [0.006, 0.01, 0.015][i],
                carry_tilt_deg: [[-15.0, 0.0, 15.0][j], [-12.0, 0.0, 12.0][f]],
            });
        }
    }
    out
}

/// Fails when two profiles differ by 20% or more in fewer than two parameters.
pub fn check_distinct_profiles(profiles: &[GaitProfile]) -> Result<()> {
    let far = |a: f64, b: f64| {
        let hi = a.max(b);
        hi > 0.0 && (a - b).abs() / hi >= 0.2 - 1e-12
    };
    for (i, a) in profiles.iter().enumerate() {
        a.validate()?;
        for b in &profiles[i + 1..] {
            if a.user_id == b.user_id {
                return Err(Error::Parameter(format!("duplicate user id {}", a.user_id)));
            }
            let differing = a
                .comparable()
                .iter()
                .zip(b.comparable())
                .filter(|(x, y)| far(**x, *y))
                .count();
            if differing < 2 {
                return Err(Error::Parameter(format!(
                    "profiles {} and {} are too similar",
                    a.user_id, b.user_id
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub duration_s: f64,
    pub rate_hz: f64,
    pub audio_rate_hz: f64,
    /// Largest per-axis deviation from the habitual carry tilt (degrees).
    pub max_tilt_deg: f64,
    pub sensor_noise_g: f64,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self {
            duration_s: 120.0,
            rate_hz: 50.0,
            audio_rate_hz: AUDIO_RATE_HZ,
            max_tilt_deg: 5.0,
            sensor_noise_g: 0.03,
        }
    }
}

/// One walking session of `profile`. The seed fixes session conditions
/// (orientation, clothing, shoes, surroundings) as well as the noise.
pub fn gen_user_session(
    profile: &GaitProfile,
    spec: &SessionSpec,
    device_id: &str,
    seed: u64,
) -> Result<(AccelStream, Vec<AudioFrame>)> {
    profile.validate()?;
    if !(spec.duration_s > 0.0 && spec.rate_hz > 0.0 && spec.audio_rate_hz > 0.0) {
        return Err(Error::Parameter("durations and rates must be positive".into()));
    }
    let mut r = rng(seed);
    let jitter = spec.max_tilt_deg.to_radians();
    let mut tilt = |habit: f64| {
        habit.to_radians()
            + if jitter > 0.0 {
                r.random_range(-jitter..=jitter)
            } else {
                0.0
            }
    };
    let rot = Rotation::tilt(tilt(profile.carry_tilt_deg[0]), tilt(profile.carry_tilt_deg[1]));
    let scale = r.random_range(0.95..1.05);
    let shoe = r.random_range(0.9..1.1);
    let tone = r.random_range(150.0..600.0);
    let surroundings = r.random_range(0.8..1.25);
    let noise = gaussian(spec.sensor_noise_g);
    let drift = gaussian(profile.phase_jitter);
    let a = profile.amplitude_g.map(|x| x * scale);
    let dt = 1.0 / spec.rate_hz;
    let n = (spec.duration_s * spec.rate_hz).round() as usize;

    let mut phase = r.random_range(0.0..2.0 * PI);
    let mut steps = Vec::new();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let p = phase;
        let world = [
            a[0] * (0.5 * p + profile.phase[0]).sin(),
            a[1] * (p + profile.phase[1]).sin(),
            1.0 + a[2] * (p.sin() + profile.harmonic_ratio * (2.0 * p).sin()),
        ];
        samples.push(sample(t, &rot, world, &noise, &mut r));
        let next = phase + 2.0 * PI * profile.step_hz * dt;
        if (next / (2.0 * PI)).floor() > (phase / (2.0 * PI)).floor() {
            steps.push(t + dt);
            phase = next + drift.sample(&mut r);
        } else {
            phase = next;
        }
    }

    let mut audio = ambient(
        &mut r,
        spec.audio_rate_hz,
        n as f64 * dt,
        profile.noise_floor * surroundings,
    );
    for t in steps {
        let amp = profile.click_amplitude * shoe * r.random_range(0.8..1.2);
        add_click(&mut audio, spec.audio_rate_hz, t, amp, tone, &mut r);
    }
    clamp_audio(&mut audio);
    Ok((
        AccelStream::new(device_id, spec.rate_hz, Unit::G, samples)?,
        frame_audio(0.0, spec.audio_rate_hz, audio),
    ))
}
