use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian, rng, sample, Rotation};
use crate::activity::ActivityClass;
use crate::error::{Error, Result};
use crate::signal::{AccelStream, Unit};

/// Parameters of one generated activity trace.
///
/// The device carries gravity plus a vertical oscillation at `freq_hz` (with a
/// second harmonic of relative size `harmonic_ratio`) and white sensor noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityGenSpec {
    pub class: ActivityClass,
    pub freq_hz: f64,
    pub amplitude_g: f64,
    pub harmonic_ratio: f64,
    pub noise_std_g: f64,
    /// Per-trace relative amplitude spread, uniform in `±amplitude_jitter`.
    pub amplitude_jitter: f64,
    /// Largest device tilt, per axis, in degrees.
    pub max_tilt_deg: f64,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub t_start: f64,
    pub seed: u64,
}

impl ActivityGenSpec {
    pub fn for_class(class: ActivityClass) -> Self {
        let (freq_hz, amplitude_g, harmonic_ratio, noise_std_g) = match class {
            ActivityClass::Walking => (2.0, 0.3, 0.2, 0.01),
            ActivityClass::Running => (3.0, 0.8, 0.2, 0.02),
            ActivityClass::Resting => (0.5, 0.05, 0.0, 0.005),
            ActivityClass::NoActivity => (0.0, 0.0, 0.0, 0.005),
        };
        Self {
            class,
            freq_hz,
            amplitude_g,
            harmonic_ratio,
            noise_std_g,
            amplitude_jitter: 0.2,
            max_tilt_deg: 20.0,
            duration_s: 10.0,
            rate_hz: 5.0,
            t_start: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            self.freq_hz,
            self.amplitude_g,
            self.harmonic_ratio,
            self.noise_std_g,
            self.amplitude_jitter,
            self.max_tilt_deg,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Parameter(format!(
                "activity spec for {} has a negative parameter",
                self.class
            )));
        }
        if self.amplitude_jitter >= 1.0 {
            return Err(Error::Parameter("amplitude_jitter must be below 1".into()));
        }
        if !(self.duration_s > 0.0 && self.rate_hz > 0.0) {
            return Err(Error::Parameter("duration and rate must be positive".into()));
        }
        Ok(())
    }
}

/// The four default specs in class order.
pub fn default_class_specs() -> [ActivityGenSpec; 4] {
    ActivityClass::ALL.map(ActivityGenSpec::for_class)
}

/// Checks that amplitudes strictly decrease Running > Walking > Resting > NoActivity.
pub fn check_amplitude_ordering(specs: &[ActivityGenSpec]) -> Result<()> {
    let amp = |c: ActivityClass| {
        specs
            .iter()
            .find(|s| s.class == c)
            .map(|s| s.amplitude_g)
            .ok_or_else(|| Error::Parameter(format!("no spec for {c}")))
    };
    let order = [
        ActivityClass::Running,
        ActivityClass::Walking,
        ActivityClass::Resting,
        ActivityClass::NoActivity,
    ];
    for pair in order.windows(2) {
        if amp(pair[0])? <= amp(pair[1])? {
            return Err(Error::Parameter(format!(
                "{} amplitude must exceed {} amplitude",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Generates a labelled activity trace in g.
pub fn gen_activity_trace(spec: &ActivityGenSpec, device_id: &str) -> Result<(AccelStream, ActivityClass)> {
    spec.validate()?;
    let mut r = rng(spec.seed);
    let tilt = spec.max_tilt_deg.to_radians();
    let rot = Rotation::random(&mut r, tilt);
    let amp = spec.amplitude_g * (1.0 + r.random_range(-1.0..=1.0) * spec.amplitude_jitter);
    let freq = spec.freq_hz * (1.0 + r.random_range(-0.05..=0.05));
    let phase = r.random_range(0.0..2.0 * PI);
    let phase2 = r.random_range(0.0..2.0 * PI);
    let noise = gaussian(spec.noise_std_g);
    let n = (spec.duration_s * spec.rate_hz).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let dt = i as f64 / spec.rate_hz;
            let w = 2.0 * PI * freq * dt;
            let vertical = amp * ((w + phase).sin() + spec.harmonic_ratio * (2.0 * w + phase2).sin());
            sample(spec.t_start + dt, &rot, [0.0, 0.0, 1.0 + vertical], &noise, &mut r)
        })
        .collect();
    Ok((AccelStream::new(device_id, spec.rate_hz, Unit::G, samples)?, spec.class))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_ordered() {
        let specs = default_class_specs();
        check_amplitude_ordering(&specs).unwrap();
        let mut bad = specs.clone();
        bad[0].amplitude_g = 0.9;
        assert!(check_amplitude_ordering(&bad).is_err());
    }

    #[test]
    fn same_seed_same_stream() {
        let spec = ActivityGenSpec {
            seed: 11,
            ..ActivityGenSpec::for_class(ActivityClass::Walking)
        };
        assert_eq!(
            gen_activity_trace(&spec, "d").unwrap(),
            gen_activity_trace(&spec, "d").unwrap()
        );
        let other = ActivityGenSpec {
            seed: 12,
            ..spec.clone()
        };
        assert_ne!(
            gen_activity_trace(&other, "d").unwrap().0,
            gen_activity_trace(&spec, "d").unwrap().0
        );
    }

    #[test]
    fn negative_parameters_rejected() {
        let spec = ActivityGenSpec {
            noise_std_g: -1.0,
            ..ActivityGenSpec::for_class(ActivityClass::Resting)
        };
        assert!(gen_activity_trace(&spec, "d").is_err());
    }
}
