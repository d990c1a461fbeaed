//! Seeded generators of ground-truth traces: activities, falls and everyday
//! handling, per-user walking sessions, and whole labelled corpora.
//!
//! Every generator is a pure function of its spec and seed.

mod activity;
mod corpus;
mod fall;
mod gait;

pub use activity::{check_amplitude_ordering, default_class_specs, gen_activity_trace, ActivityGenSpec};
pub use corpus::{
    activity_corpus, auth_corpus, event_corpus, gen_corpus, shock_examples, ActivityRecipe, AuthRecipe, CorpusItem,
    CorpusManifest, EventRecipe, ManifestEntry, Recipe, Split, CORPUS_MANIFEST, LABEL_FALL_ABANDONED,
    LABEL_FALL_PICKED_UP,
};
pub use fall::{
    free_fall_duration, gen_everyday_trace, gen_fall_trace, EverydayKind, EverydaySpec, FallGenSpec, FallTruth,
    PostImpact, SynthTrace,
};
pub use gait::{check_distinct_profiles, default_profiles, gen_user_session, GaitProfile, SessionSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::signal::{AccelSample, AudioFrame};

/// Default audio rate of the generators.
pub const AUDIO_RATE_HZ: f64 = 8000.0;
/// Length of generated audio frames.
pub const AUDIO_FRAME_S: f64 = 0.5;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-seed for item `index` of stream `tag` (splitmix64).
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn gaussian(std: f64) -> Normal<f64> {
    Normal::new(0.0, std.max(0.0)).expect("finite non-negative std")
}

/// Row-major 3×3 rotation mapping world (x lateral, y forward, z up) to
/// device coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Rotation([[f64; 3]; 3]);

impl Rotation {
    pub(crate) fn identity() -> Self {
        Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rotation by `roll` about x followed by `pitch` about y (radians).
    pub(crate) fn tilt(roll: f64, pitch: f64) -> Self {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let rx = [[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]];
        let ry = [[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]];
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| ry[i][k] * rx[k][j]).sum();
            }
        }
        Self(m)
    }

    /// Random tilt with each angle uniform in `±max_rad`.
    pub(crate) fn random(rng: &mut impl Rng, max_rad: f64) -> Self {
        if max_rad <= 0.0 {
            return Self::identity();
        }
        Self::tilt(
            rng.random_range(-max_rad..=max_rad),
            rng.random_range(-max_rad..=max_rad),
        )
    }

    /// Uniformly random orientation.
    pub(crate) fn any(rng: &mut impl Rng) -> Self {
        let roll = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let pitch = (rng.random_range(-1.0_f64..1.0)).asin();
        Self::tilt(roll, pitch)
    }

    pub(crate) fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }
}

/// Builds a device sample from a world-frame specific force plus sensor noise.
pub(crate) fn sample(t: f64, r: &Rotation, world: [f64; 3], noise: &Normal<f64>, rng: &mut impl Rng) -> AccelSample {
    let d = r.apply(world);
    AccelSample::new(
        t,
        d[0] + noise.sample(rng),
        d[1] + noise.sample(rng),
        d[2] + noise.sample(rng),
    )
}

/// Splits a continuous audio signal into fixed-length frames.
pub(crate) fn frame_audio(t0: f64, rate_hz: f64, samples: Vec<f64>) -> Vec<AudioFrame> {
    let per = ((AUDIO_FRAME_S * rate_hz).round() as usize).max(1);
    samples
        .chunks(per)
        .enumerate()
        .map(|(i, c)| AudioFrame {
            t_start: t0 + (i * per) as f64 / rate_hz,
            rate_hz,
            samples: c.to_vec(),
        })
        .collect()
}

/// Adds an exponentially decaying noise burst (a click) starting at `t`.
pub(crate) fn add_click(audio: &mut [f64], rate_hz: f64, t: f64, amplitude: f64, tone_hz: f64, rng: &mut impl Rng) {
    let tau = 0.015;
    let start = (t * rate_hz).ceil().max(0.0) as usize;
    let len = (6.0 * tau * rate_hz) as usize;
    for i in start..(start + len).min(audio.len()) {
        let dt = i as f64 / rate_hz - t;
        let carrier = 0.7 * (2.0 * std::f64::consts::PI * tone_hz * dt).sin() + 0.3 * rng.random_range(-1.0..1.0);
        audio[i] += amplitude * (-dt / tau).exp() * carrier;
    }
}

pub(crate) fn clamp_audio(audio: &mut [f64]) {
    audio.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
}

/// Draws `n` points from a one-dimensional Gaussian mixture given as
/// `(weight, mean, variance)` triples.
pub fn gen_mixture_1d(components: &[(f64, f64, f64)], n: usize, seed: u64) -> Result<Vec<f64>> {
    let total: f64 = components.iter().map(|c| c.0).sum();
    if components.is_empty() || !(total > 0.0) || components.iter().any(|c| c.0 < 0.0 || !(c.2 >= 0.0)) {
        return Err(Error::Parameter(
            "mixture needs non-negative weights and variances".into(),
        ));
    }
    let mut r = rng(seed);
    let normals: Vec<Normal<f64>> = components.iter().map(|c| gaussian(c.2.sqrt())).collect();
    Ok((0..n)
        .map(|_| {
            let mut u = r.random_range(0.0..total);
            let mut k = 0;
            while k + 1 < components.len() && u >= components[k].0 {
                u -= components[k].0;
                k += 1;
            }
            components[k].1 + normals[k].sample(&mut r)
        })
        .collect())
}
