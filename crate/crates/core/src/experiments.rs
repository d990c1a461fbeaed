//! End-to-end experiment drivers over generated or loaded corpora: activity
//! classification, risky-event detection in both modes, and identification
//! with each feature set.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::activity::{
    evaluate_classifier, stream_instance_feature, train_activity_classifier, ActivityClass, ActivityFeatureConfig,
    ActivityInstance, ActivityTraining, ConfusionMatrix, EvaluationReport,
};
use crate::auth::{
    auth_windows, enroll, evaluate_identifier, AuthConfig, AuthEvaluation, FeatureSet, Identifier, LabeledWindow,
};
use crate::error::{Error, Result};
use crate::events::{
    alarms, detect_records, train_shock_model, DetectionMode, EventConfig, EventDetector, RiskyAlarm, ShockModel,
};
use crate::models::TrainConfig;
use crate::synth::{shock_examples, CorpusItem, CorpusManifest, Split, SynthTrace, LABEL_FALL_ABANDONED};
use crate::trace::{merge_records, read_audio, read_trace};

/// Reads every trace (and audio side file) listed in a corpus manifest.
pub fn load_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<CorpusItem>)> {
    let manifest = CorpusManifest::load(dir)?;
    let items = manifest
        .entries
        .iter()
        .map(|e| {
            let stream = read_trace(&dir.join(&e.trace))?;
            let audio = match &e.audio {
                Some(a) => read_audio(&dir.join(a))?,
                None => Vec::new(),
            };
            Ok(CorpusItem {
                entry: e.clone(),
                trace: SynthTrace {
                    stream,
                    audio,
                    truth: e.truth,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, items))
}

/// Labelled activity instances of the given split.
pub fn activity_instances(
    items: &[CorpusItem],
    split: Split,
    cfg: &ActivityFeatureConfig,
) -> Result<Vec<ActivityInstance>> {
    items
        .iter()
        .filter(|i| i.entry.split == Some(split))
        .map(|i| {
            let class: ActivityClass = i.entry.label.parse()?;
            let stream = i.trace.stream.clone().into_g();
            Ok(ActivityInstance {
                device_id: stream.device_id.clone(),
                t_start: stream.t_start().unwrap_or(0.0),
                duration_s: stream.duration(),
                feature: stream_instance_feature(&stream, cfg)?,
                label: Some(class),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ActivityExperiment {
    pub training: ActivityTraining,
    pub confusion: ConfusionMatrix,
    pub train_instances: usize,
}

impl ActivityExperiment {
    pub fn report(&self) -> EvaluationReport {
        EvaluationReport::from(&self.confusion)
    }
}

pub fn activity_experiment(
    items: &[CorpusItem],
    features: &ActivityFeatureConfig,
    train: &TrainConfig,
) -> Result<ActivityExperiment> {
    let train_set = activity_instances(items, Split::Train, features)?;
    let test_set = activity_instances(items, Split::Test, features)?;
    let training = train_activity_classifier(&train_set, train)?;
    let confusion = evaluate_classifier(&training.models, &test_set)?;
    Ok(ActivityExperiment {
        training,
        confusion,
        train_instances: train_set.len(),
    })
}

/// Trains the shock classifier on a labelled event corpus.
pub fn shock_model_from_corpus(items: &[CorpusItem], events: &EventConfig, train: &TrainConfig) -> Result<ShockModel> {
    let examples = shock_examples(items, events)?;
    Ok(train_shock_model(&examples, train)?.0)
}

/// Alarms raised on one episode by each detection mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub id: String,
    pub label: String,
    pub three_step: Vec<RiskyAlarm>,
    pub impact_only: Vec<RiskyAlarm>,
}

impl EpisodeOutcome {
    pub fn is_risky(&self) -> bool {
        self.label == LABEL_FALL_ABANDONED
    }
}

/// Alarm counts of one detection mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmCounts {
    pub risky_episodes: usize,
    pub detected: usize,
    /// Alarms raised on episodes that were not risky.
    pub false_alarms: usize,
}

impl AlarmCounts {
    pub fn detection_rate(&self) -> f64 {
        if self.risky_episodes == 0 {
            0.0
        } else {
            self.detected as f64 / self.risky_episodes as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventExperiment {
    pub episodes: Vec<EpisodeOutcome>,
    pub three_step: AlarmCounts,
    pub impact_only: AlarmCounts,
}

fn count(episodes: &[EpisodeOutcome], pick: fn(&EpisodeOutcome) -> &Vec<RiskyAlarm>) -> AlarmCounts {
    let mut c = AlarmCounts {
        risky_episodes: 0,
        detected: 0,
        false_alarms: 0,
    };
    for e in episodes {
        if e.is_risky() {
            c.risky_episodes += 1;
            c.detected += usize::from(!pick(e).is_empty());
        } else {
            c.false_alarms += pick(e).len();
        }
    }
    c
}

/// Runs one trace through a fresh detector.
pub fn detect_trace(
    trace: &SynthTrace,
    mode: DetectionMode,
    cfg: &EventConfig,
    model: &Arc<ShockModel>,
) -> Result<Vec<crate::events::DetectorEvent>> {
    let stream = trace.stream.clone().into_g();
    let mut d = EventDetector::new(
        stream.device_id.clone(),
        stream.rate_hz,
        mode,
        cfg.clone(),
        Some(model.clone()),
    )?;
    detect_records(&mut d, &merge_records(&stream, &trace.audio))
}

pub fn event_experiment(items: &[CorpusItem], cfg: &EventConfig, model: &ShockModel) -> Result<EventExperiment> {
    let model = Arc::new(model.clone());
    let episodes = items
        .iter()
        .map(|i| {
            let run = |mode| -> Result<Vec<RiskyAlarm>> {
                Ok(alarms(&detect_trace(&i.trace, mode, cfg, &model)?)
                    .into_iter()
                    .cloned()
                    .collect())
            };
            Ok(EpisodeOutcome {
                id: i.entry.id.clone(),
                label: i.entry.label.clone(),
                three_step: run(DetectionMode::ThreeStep)?,
                impact_only: run(DetectionMode::ImpactOnly)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EventExperiment {
        three_step: count(&episodes, |e| &e.three_step),
        impact_only: count(&episodes, |e| &e.impact_only),
        episodes,
    })
}

/// Combined-feature windows of every session in a split.
pub fn labelled_windows(items: &[CorpusItem], split: Split, window_s: f64) -> Result<Vec<LabeledWindow>> {
    let mut out = Vec::new();
    for i in items.iter().filter(|i| i.entry.split == Some(split)) {
        let session = i
            .entry
            .session
            .ok_or_else(|| Error::Data(format!("{} has no session number", i.entry.id)))?;
        let stream = i.trace.stream.clone().into_g();
        for w in auth_windows(&stream, &i.trace.audio, window_s)? {
            out.push(LabeledWindow {
                user_id: i.entry.label.clone(),
                session,
                features: w.features,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AuthExperiment {
    pub identifiers: Vec<Identifier>,
    pub evaluations: Vec<AuthEvaluation>,
}

impl AuthExperiment {
    pub fn evaluation(&self, set: FeatureSet) -> Option<&AuthEvaluation> {
        self.evaluations.iter().find(|e| e.feature_set == set)
    }
}

/// Enrolls on the training sessions and evaluates on the rest, once per feature set.
pub fn auth_experiment(items: &[CorpusItem], cfg: &AuthConfig, sets: &[FeatureSet]) -> Result<AuthExperiment> {
    let train = labelled_windows(items, Split::Train, cfg.window_s)?;
    let test = labelled_windows(items, Split::Test, cfg.window_s)?;
    let mut identifiers = Vec::new();
    let mut evaluations = Vec::new();
    for &set in sets {
        let id = enroll(
            &train,
            &AuthConfig {
                feature_set: set,
                ..cfg.clone()
            },
        )?;
        evaluations.push(evaluate_identifier(&id, &test, cfg.vote_windows)?);
        identifiers.push(id);
    }
    Ok(AuthExperiment {
        identifiers,
        evaluations,
    })
}
