use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activity::{gen_activity_trace, ActivityGenSpec};
use super::fall::{
    gen_everyday_trace, gen_fall_trace, peak_index, EverydayKind, EverydaySpec, FallGenSpec, FallTruth, PostImpact,
    SynthTrace,
};
use super::gait::{default_profiles, gen_user_session, SessionSpec};
use super::{derive_seed, rng};
use crate::activity::ActivityClass;
use crate::error::{Error, Result};
use crate::events::{shock_window_features, EventConfig};
use crate::features::FeatureVector;
use crate::trace::{write_audio, write_trace};

pub const CORPUS_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityRecipe {
    pub per_class: usize,
    pub train_per_class: usize,
    pub duration_s: f64,
    pub rate_hz: f64,
}

impl Default for ActivityRecipe {
    fn default() -> Self {
        Self {
            per_class: 80,
            train_per_class: 52,
            duration_s: 10.0,
            rate_hz: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecipe {
    pub abandoned: usize,
    pub picked_up: usize,
    pub pickup_after_s: f64,
    pub everyday: Vec<(EverydayKind, usize)>,
    pub rate_hz: f64,
    pub audio_rate_hz: f64,
}

impl Default for EventRecipe {
    fn default() -> Self {
        Self {
            abandoned: 24,
            picked_up: 12,
            pickup_after_s: 1.0,
            everyday: vec![
                (EverydayKind::Walk, 26),
                (EverydayKind::Jog, 20),
                (EverydayKind::Stairs, 16),
                (EverydayKind::Lift, 12),
                (EverydayKind::SitDown, 12),
                (EverydayKind::SetDown, 12),
            ],
            rate_hz: 50.0,
            audio_rate_hz: 2000.0,
        }
    }
}

impl EventRecipe {
    pub fn shock_count(&self) -> usize {
        self.abandoned + self.picked_up
    }

    pub fn normal_count(&self) -> usize {
        self.everyday.iter().map(|(_, n)| n).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthRecipe {
    pub users: usize,
    pub sessions: u32,
    /// Sessions numbered below this are used for enrollment.
    pub train_sessions: u32,
    pub session: SessionSpec,
}

impl Default for AuthRecipe {
    fn default() -> Self {
        Self {
            users: 9,
            sessions: 3,
            train_sessions: 2,
            session: SessionSpec {
                audio_rate_hz: 2000.0,
                ..SessionSpec::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum Recipe {
    Activities(ActivityRecipe),
    Events(EventRecipe),
    Auth(AuthRecipe),
}

impl Recipe {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "activities" => Ok(Recipe::Activities(ActivityRecipe::default())),
            "events" => Ok(Recipe::Events(EventRecipe::default())),
            "auth" => Ok(Recipe::Auth(AuthRecipe::default())),
            other => Err(Error::Parameter(format!(
                "unknown recipe {other:?}, expected activities, events or auth"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub trace: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<FallTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<u32>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    #[serde(flatten)]
    pub recipe: Recipe,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CORPUS_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

/// A generated trace with its manifest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub entry: ManifestEntry,
    pub trace: SynthTrace,
}

fn entry(id: String, label: &str, split: Option<Split>, seed: u64) -> ManifestEntry {
    ManifestEntry {
        trace: format!("{id}.jsonl"),
        id,
        audio: None,
        label: label.to_string(),
        split,
        truth: None,
        session: None,
        seed,
    }
}

/// Balanced labelled activity instances; the first `train_per_class` of each
/// class are the training split.
pub fn activity_corpus(recipe: &ActivityRecipe, seed: u64) -> Result<Vec<CorpusItem>> {
    if recipe.train_per_class > recipe.per_class {
        return Err(Error::Parameter("train_per_class exceeds per_class".into()));
    }
    let mut out = Vec::with_capacity(4 * recipe.per_class);
    for class in ActivityClass::ALL {
        for i in 0..recipe.per_class {
            let s = derive_seed(seed, 1 + class.index() as u64, i as u64);
            let spec = ActivityGenSpec {
                duration_s: recipe.duration_s,
                rate_hz: recipe.rate_hz,
                seed: s,
                ..ActivityGenSpec::for_class(class)
            };
            let id = format!("{}-{i:03}", class.name());
            let (stream, _) = gen_activity_trace(&spec, &id)?;
            let split = if i < recipe.train_per_class {
                Split::Train
            } else {
                Split::Test
            };
            out.push(CorpusItem {
                entry: entry(id, class.name(), Some(split), s),
                trace: SynthTrace {
                    stream,
                    audio: Vec::new(),
                    truth: None,
                },
            });
        }
    }
    Ok(out)
}

pub const LABEL_FALL_ABANDONED: &str = "fall-abandoned";
pub const LABEL_FALL_PICKED_UP: &str = "fall-picked-up";

/// Falls (abandoned and picked up) followed by everyday traces.
pub fn event_corpus(recipe: &EventRecipe, seed: u64) -> Result<Vec<CorpusItem>> {
    let mut out = Vec::new();
    let falls = (0..recipe.abandoned)
        .map(|i| (LABEL_FALL_ABANDONED, PostImpact::Abandoned, i))
        .chain((0..recipe.picked_up).map(|i| {
            (
                LABEL_FALL_PICKED_UP,
                PostImpact::PickedUpAfter {
                    seconds: recipe.pickup_after_s,
                },
                i,
            )
        }));
    for (label, post_impact, i) in falls {
        let tag = if post_impact == PostImpact::Abandoned { 10 } else { 11 };
        let s = derive_seed(seed, tag, i as u64);
        let mut r = rng(s);
        let spec = FallGenSpec {
            height_m: r.random_range(0.6..0.9),
            impact_g: r.random_range(2.6..3.4),
            click_amplitude: r.random_range(0.5..0.9),
            carry_s: r.random_range(2.5..4.0),
            post_impact,
            rate_hz: recipe.rate_hz,
            audio_rate_hz: recipe.audio_rate_hz,
            seed: s,
            ..FallGenSpec::default()
        };
        let id = format!("{label}-{i:03}");
        let trace = gen_fall_trace(&spec, &id)?;
        let mut e = entry(id.clone(), label, None, s);
        e.audio = Some(format!("{id}.audio.jsonl"));
        e.truth = trace.truth;
        out.push(CorpusItem { entry: e, trace });
    }
    for (kind, count) in &recipe.everyday {
        for i in 0..*count {
            let s = derive_seed(seed, 20 + *kind as u64, i as u64);
            let spec = EverydaySpec {
                rate_hz: recipe.rate_hz,
                audio_rate_hz: recipe.audio_rate_hz,
                ..EverydaySpec::new(*kind, s)
            };
            let id = format!("{}-{i:03}", kind.name());
            let trace = gen_everyday_trace(&spec, &id)?;
            let mut e = entry(id.clone(), kind.name(), None, s);
            e.audio = Some(format!("{id}.audio.jsonl"));
            out.push(CorpusItem { entry: e, trace });
        }
    }
    Ok(out)
}

/// Walking sessions for each user; early sessions form the training split.
pub fn auth_corpus(recipe: &AuthRecipe, seed: u64) -> Result<Vec<CorpusItem>> {
    let profiles = default_profiles();
    if recipe.users < 2 || recipe.users > profiles.len() {
        return Err(Error::Parameter(format!("users must be in 2..={}", profiles.len())));
    }
    let mut out = Vec::new();
    for (u, profile) in profiles.iter().take(recipe.users).enumerate() {
        for session in 0..recipe.sessions {
            let s = derive_seed(seed, 30 + u as u64, session as u64);
            let id = format!("{}-s{session}", profile.user_id);
            let (stream, audio) = gen_user_session(profile, &recipe.session, &id, s)?;
            let split = if session < recipe.train_sessions {
                Split::Train
            } else {
                Split::Test
            };
            let mut e = entry(id.clone(), &profile.user_id, Some(split), s);
            e.audio = Some(format!("{id}.audio.jsonl"));
            e.session = Some(session);
            out.push(CorpusItem {
                entry: e,
                trace: SynthTrace {
                    stream,
                    audio,
                    truth: None,
                },
            });
        }
    }
    Ok(out)
}

/// Labelled shock-model examples: the window centred on each fall's impact
/// (shock) and on the largest-norm sample of each everyday trace (normal).
pub fn shock_examples(items: &[CorpusItem], cfg: &EventConfig) -> Result<Vec<(FeatureVector, bool)>> {
    items
        .iter()
        .map(|item| {
            let samples = &item.trace.stream.samples;
            let centre = match item.trace.truth {
                Some(truth) => {
                    let lo = samples.partition_point(|s| s.t < truth.t_impact - cfg.candidate_radius);
                    let hi = samples.partition_point(|s| s.t <= truth.t_impact + cfg.candidate_radius);
                    peak_index(&samples[lo..hi]).map(|i| lo + i)
                }
                None => peak_index(samples),
            }
            .ok_or(Error::EmptyInput("trace has no samples"))?;
            let x = shock_window_features(samples, &item.trace.audio, samples[centre].t, cfg)?;
            Ok((x, item.trace.truth.is_some()))
        })
        .collect()
}

/// Generates a corpus in memory and writes it to `out_dir` with its manifest.
pub fn gen_corpus(recipe: &Recipe, seed: u64, out_dir: &Path) -> Result<CorpusManifest> {
    let items = match recipe {
        Recipe::Activities(r) => activity_corpus(r, seed)?,
        Recipe::Events(r) => event_corpus(r, seed)?,
        Recipe::Auth(r) => auth_corpus(r, seed)?,
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for item in &items {
        write_trace(&out_dir.join(&item.entry.trace), &item.trace.stream)?;
        if let Some(audio) = &item.entry.audio {
            write_audio(&out_dir.join(audio), &item.trace.audio)?;
        }
    }
    let manifest = CorpusManifest {
        seed,
        recipe: recipe.clone(),
        entries: items.into_iter().map(|i| i.entry).collect(),
    };
    let path = out_dir.join(CORPUS_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activity_recipe_is_balanced() {
        let items = activity_corpus(&ActivityRecipe::default(), 7).unwrap();
        assert_eq!(items.len(), 320);
        for class in ActivityClass::ALL {
            let of: Vec<_> = items.iter().filter(|i| i.entry.label == class.name()).collect();
            assert_eq!(of.len(), 80);
            assert_eq!(of.iter().filter(|i| i.entry.split == Some(Split::Train)).count(), 52);
        }
    }

    #[test]
    fn event_recipe_counts() {
        let r = EventRecipe::default();
        assert_eq!((r.shock_count(), r.normal_count()), (36, 98));
    }

    #[test]
    fn recipes_by_name() {
        assert!(matches!(Recipe::by_name("events").unwrap(), Recipe::Events(_)));
        assert!(Recipe::by_name("nope").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recipe = Recipe::Activities(ActivityRecipe {
            per_class: 2,
            train_per_class: 1,
            ..ActivityRecipe::default()
        });
        let m = gen_corpus(&recipe, 3, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 8);
        assert_eq!(CorpusManifest::load(dir.path()).unwrap(), m);
        assert!(dir.path().join("walking-001.jsonl").exists());
    }
}
