#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use activitymon_core::experiments::{activity_experiment, shock_model_from_corpus};
use activitymon_core::synth::{
    activity_corpus, event_corpus, gen_activity_trace, gen_fall_trace, ActivityGenSpec, ActivityRecipe, EventRecipe,
    EverydayKind, FallGenSpec, PostImpact, SynthTrace,
};
use activitymon_core::trace::{merge_records, TraceRecord};
use activitymon_core::{AccelStream, ActivityClass, AudioFrame, Config, Unit};
use activitymon_service::{AppConfig, DeviceConfig, Models, PipelineSettings, PrivacyMode, WireBody};

pub const TOKEN: &str = "secret";

/// Models trained once per test binary on small synthetic corpora.
pub fn models() -> Models {
    static MODELS: OnceLock<Models> = OnceLock::new();
    MODELS
        .get_or_init(|| {
            let cfg = Config::default();
            let activity = activity_corpus(&ActivityRecipe::default(), 11).unwrap();
            let experiment = activity_experiment(&activity, &cfg.activity.features, &cfg.activity.train).unwrap();
            let recipe = EventRecipe {
                abandoned: 8,
                picked_up: 4,
                everyday: vec![
                    (EverydayKind::Walk, 4),
                    (EverydayKind::Jog, 4),
                    (EverydayKind::Lift, 4),
                    (EverydayKind::SetDown, 4),
                ],
                ..EventRecipe::default()
            };
            let events = event_corpus(&recipe, 12).unwrap();
            let shock = shock_model_from_corpus(&events, &cfg.events, &cfg.shock_train).unwrap();
            Models {
                activity: Some(Arc::new(experiment.training.models)),
                shock: Some(Arc::new(shock)),
                identifier: None,
            }
        })
        .clone()
}

pub fn app_config(data_dir: &Path, devices: &[&str]) -> AppConfig {
    let mut cfg = AppConfig::default();
    cfg.service.data_dir = data_dir.to_path_buf();
    cfg.service.checkpoint_every = 64;
    cfg.devices = devices
        .iter()
        .map(|id| {
            (
                id.to_string(),
                DeviceConfig {
                    token: TOKEN.to_string(),
                    privacy: PrivacyMode::Full,
                    owner: None,
                },
            )
        })
        .collect::<BTreeMap<_, _>>();
    cfg
}

pub fn pipeline_settings(cfg: &AppConfig, device: &str) -> PipelineSettings {
    let d = &cfg.devices[device];
    PipelineSettings {
        analytics: cfg.analytics(),
        monitor: cfg.monitor.clone(),
        privacy: d.privacy,
        owner: d.owner.clone(),
    }
}

pub fn fall(seed: u64, device: &str) -> SynthTrace {
    gen_fall_trace(
        &FallGenSpec {
            seed,
            post_impact: PostImpact::Abandoned,
            ..FallGenSpec::default()
        },
        device,
    )
    .unwrap()
}

/// Consecutive activity segments, each a whole number of 10 s instances.
pub fn activity_day(device: &str, segments: &[(ActivityClass, f64)], seed: u64) -> AccelStream {
    let mut samples = Vec::new();
    let mut t = 0.0;
    let mut rate = 0.0;
    for (k, (class, duration_s)) in segments.iter().enumerate() {
        let spec = ActivityGenSpec {
            duration_s: *duration_s,
            t_start: t,
            seed: seed + k as u64,
            ..ActivityGenSpec::for_class(*class)
        };
        rate = spec.rate_hz;
        let (s, _) = gen_activity_trace(&spec, device).unwrap();
        samples.extend(s.samples);
        t += duration_s;
    }
    AccelStream::new(device, rate, Unit::G, samples).unwrap()
}

/// Wire lines for a whole trace: header first, then the canonical merge.
pub fn wire_lines(stream: &AccelStream, audio: &[AudioFrame], first_seq: u64) -> Vec<String> {
    let mut bodies = vec![WireBody::Header {
        rate_hz: stream.rate_hz,
        unit: stream.unit,
    }];
    for r in merge_records(stream, audio) {
        bodies.push(match r {
            TraceRecord::Sample(s) => WireBody::Sample(s),
            TraceRecord::Audio(f) => WireBody::Audio(f),
        });
    }
    bodies
        .into_iter()
        .enumerate()
        .map(|(i, body)| {
            activitymon_service::IngestLine {
                device_id: stream.device_id.clone(),
                seq: first_seq + i as u64,
                token: TOKEN.to_string(),
                body,
            }
            .to_line()
        })
        .collect()
}

/// A trace file with audio frames appended, as a snapshot body.
pub fn snapshot_body(stream: &AccelStream, audio: &[AudioFrame]) -> String {
    let mut buf = Vec::new();
    activitymon_core::trace::write_trace_to(&mut buf, stream).unwrap();
    activitymon_core::trace::write_audio_to(&mut buf, audio).unwrap();
    String::from_utf8(buf).unwrap()
}
