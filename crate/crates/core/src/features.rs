//! Feature extraction for activity classification, shock detection and
//! implicit authentication.
//!
//! Every vector carries the [`Schema`] that produced it. Order-sensitive
//! entries (those that change if samples inside a window are permuted) are
//! the jerk means of the activity and shock schemas and the spectral variance
//! of the audio schema; all other entries are permutation invariant.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{jerk_series, AudioFrame, Window};
use crate::stats::{mean, pearson, variance};

/// Version of the schema registry; bump whenever a schema's layout changes.
pub const SCHEMA_REGISTRY_VERSION: u32 = 1;

/// Transform size used for the audio spectrum feature.
pub const AUDIO_DFT_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schema {
    Activity,
    MotionAuth,
    AudioAuth,
    /// Motion-auth features followed by audio-auth features.
    AuthCombined,
    Shock,
}

impl Schema {
    pub const ALL: [Schema; 5] = [
        Schema::Activity,
        Schema::MotionAuth,
        Schema::AudioAuth,
        Schema::AuthCombined,
        Schema::Shock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Schema::Activity => "activity",
            Schema::MotionAuth => "motion-auth",
            Schema::AudioAuth => "audio-auth",
            Schema::AuthCombined => "auth-combined",
            Schema::Shock => "shock",
        }
    }

    pub fn labels(self) -> Vec<&'static str> {
        const ACTIVITY: [&str; 2] = ["mean_magnitude", "mean_abs_jerk"];
        const MOTION: [&str; 11] = [
            "mean_x",
            "mean_y",
            "mean_z",
            "var_x",
            "var_y",
            "var_z",
            "mean_norm",
            "var_norm",
            "corr_xy",
            "corr_xz",
            "corr_yz",
        ];
        const AUDIO: [&str; 4] = ["audio_mean", "audio_var", "audio_energy", "audio_spectrum_var"];
        const SHOCK: [&str; 8] = [
            "mean_norm",
            "var_norm",
            "max_norm",
            "mean_abs_jerk",
            "audio_mean",
            "audio_var",
            "audio_energy",
            "audio_peak",
        ];
        match self {
            Schema::Activity => ACTIVITY.to_vec(),
            Schema::MotionAuth => MOTION.to_vec(),
            Schema::AudioAuth => AUDIO.to_vec(),
            Schema::AuthCombined => MOTION.iter().chain(AUDIO.iter()).copied().collect(),
            Schema::Shock => SHOCK.to_vec(),
        }
    }

    #[allow(clippy::len_without_is_empty)] // every schema has features
    pub fn len(self) -> usize {
        match self {
            Schema::Activity => 2,
            Schema::MotionAuth => 11,
            Schema::AudioAuth => 4,
            Schema::AuthCombined => 15,
            Schema::Shock => 8,
        }
    }

    pub fn manifest(self) -> SchemaManifest {
        SchemaManifest {
            registry_version: SCHEMA_REGISTRY_VERSION,
            name: self,
            len: self.len(),
            labels: self.labels().into_iter().map(String::from).collect(),
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Serialized description of a schema, stored with every trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaManifest {
    pub registry_version: u32,
    pub name: Schema,
    pub len: usize,
    pub labels: Vec<String>,
}

impl SchemaManifest {
    /// Checks that a stored manifest still matches the current registry.
    pub fn check(&self) -> Result<Schema> {
        let current = self.name.manifest();
        if *self != current {
            return Err(Error::Schema {
                expected: format!(
                    "{} v{} ({} values)",
                    current.name, current.registry_version, current.len
                ),
                got: format!("{} v{} ({} values)", self.name, self.registry_version, self.len),
            });
        }
        Ok(self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub schema: Schema,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: Schema, values: Vec<f64>) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(Error::Schema {
                expected: format!("{schema} ({} values)", schema.len()),
                got: format!("{} values", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in {schema} features")));
        }
        Ok(Self { schema, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn expect_schema(&self, schema: Schema) -> Result<()> {
        if self.schema != schema {
            return Err(Error::schema(schema, self.schema));
        }
        Ok(())
    }
}

fn require_samples(w: &Window<'_>, needed: usize) -> Result<()> {
    if w.len() < needed {
        return Err(Error::InsufficientData { needed, got: w.len() });
    }
    Ok(())
}

/// `[mean |a|, mean |jerk|]` over a window of high-passed samples.
pub fn activity_features(w: &Window<'_>) -> Result<FeatureVector> {
    require_samples(w, 2)?;
    let mags = w.magnitudes();
    let jerk = jerk_series(&mags)?;
    let mean_abs_jerk = jerk.iter().map(|j| j.abs()).sum::<f64>() / jerk.len() as f64;
    FeatureVector::new(Schema::Activity, vec![mean(&mags), mean_abs_jerk])
}

/// Per-axis means and variances, norm mean and variance, and pairwise axis
/// correlations over a window of (unfiltered) samples.
pub fn motion_auth_features(w: &Window<'_>) -> Result<FeatureVector> {
    require_samples(w, 2)?;
    let xs: Vec<f64> = w.samples.iter().map(|s| s.ax).collect();
    let ys: Vec<f64> = w.samples.iter().map(|s| s.ay).collect();
    let zs: Vec<f64> = w.samples.iter().map(|s| s.az).collect();
    let norms = w.magnitudes();
    FeatureVector::new(
        Schema::MotionAuth,
        vec![
            mean(&xs),
            mean(&ys),
            mean(&zs),
            variance(&xs),
            variance(&ys),
            variance(&zs),
            mean(&norms),
            variance(&norms),
            pearson(&xs, &ys),
            pearson(&xs, &zs),
            pearson(&ys, &zs),
        ],
    )
}

/// Reusable spectrum calculator for the audio features.
pub struct AudioSpectrum {
    fft: Arc<dyn Fft<f64>>,
}

impl Default for AudioSpectrum {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for AudioSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AudioSpectrum")
            .field("points", &AUDIO_DFT_POINTS)
            .finish()
    }
}

impl AudioSpectrum {
    pub fn new() -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(AUDIO_DFT_POINTS),
        }
    }

    /// Reduces a frame to [`AUDIO_DFT_POINTS`] values: contiguous blocks are
    /// averaged when the frame is longer, shorter frames are zero-padded.
    pub fn downmix(samples: &[f64]) -> Vec<f64> {
        let n = samples.len();
        let m = AUDIO_DFT_POINTS;
        if n <= m {
            let mut out = samples.to_vec();
            out.resize(m, 0.0);
            return out;
        }
        (0..m)
            .map(|i| {
                let lo = i * n / m;
                let hi = (i + 1) * n / m;
                mean(&samples[lo..hi])
            })
            .collect()
    }

    /// One-sided magnitude spectrum `|X_k| / M` for `k = 1..=M/2`.
    pub fn magnitudes(&self, samples: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = Self::downmix(samples)
            .into_iter()
            .map(|x| Complex::new(x, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let scale = AUDIO_DFT_POINTS as f64;
        buf[1..=AUDIO_DFT_POINTS / 2].iter().map(|c| c.norm() / scale).collect()
    }

    /// `[mean, variance, energy, spectral-magnitude variance]` of a frame.
    pub fn features(&self, frame: &AudioFrame) -> Result<FeatureVector> {
        let s = &frame.samples;
        if s.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let energy = s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64;
        let spectrum = self.magnitudes(s);
        FeatureVector::new(
            Schema::AudioAuth,
            vec![mean(s), variance(s), energy, variance(&spectrum)],
        )
    }
}

/// Audio authentication features; see [`AudioSpectrum::features`].
pub fn audio_auth_features(frame: &AudioFrame) -> Result<FeatureVector> {
    AudioSpectrum::new().features(frame)
}

/// Features for the shock classifier: norm statistics and jerk of the motion
/// window plus simple loudness statistics of the matching audio.
pub fn shock_features(w: &Window<'_>, audio: &AudioFrame) -> Result<FeatureVector> {
    require_samples(w, 1)?;
    if audio.samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let norms = w.magnitudes();
    let max_norm = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_abs_jerk = if norms.len() >= 2 {
        let jerk = jerk_series(&norms)?;
        jerk.iter().map(|j| j.abs()).sum::<f64>() / jerk.len() as f64
    } else {
        0.0
    };
    let a = &audio.samples;
    let energy = a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64;
    let peak = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    FeatureVector::new(
        Schema::Shock,
        vec![
            mean(&norms),
            variance(&norms),
            max_norm,
            mean_abs_jerk,
            mean(a),
            variance(a),
            energy,
            peak,
        ],
    )
}

/// Element-wise mean of same-schema vectors.
pub fn instance_features(windows: &[FeatureVector]) -> Result<FeatureVector> {
    let first = windows
        .first()
        .ok_or(Error::EmptyInput("no feature vectors to average"))?;
    let mut acc = vec![0.0; first.len()];
    for v in windows {
        v.expect_schema(first.schema)?;
        for (a, x) in acc.iter_mut().zip(&v.values) {
            *a += x;
        }
    }
    let n = windows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    FeatureVector::new(first.schema, acc)
}

/// Concatenates motion-auth and audio-auth vectors into the combined schema.
pub fn combine_auth(motion: &FeatureVector, audio: &FeatureVector) -> Result<FeatureVector> {
    motion.expect_schema(Schema::MotionAuth)?;
    audio.expect_schema(Schema::AudioAuth)?;
    let values = motion.values.iter().chain(&audio.values).copied().collect();
    FeatureVector::new(Schema::AuthCombined, values)
}
