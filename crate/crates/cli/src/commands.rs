use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use activitymon_core::activity::{write_plot_data, PlotRow};
use activitymon_core::auth::evaluate_identifier;
use activitymon_core::events::{alarms, detect_records};
use activitymon_core::experiments::{activity_instances, event_experiment, labelled_windows, load_corpus};
use activitymon_core::signal::high_passed_magnitude;
use activitymon_core::synth::{gen_corpus, CorpusItem, Recipe, Split};
use activitymon_core::trace::{merge_records, read_audio, read_trace, TraceRecord};
use activitymon_core::{
    activity_level, classify_activity, enroll as enroll_users, evaluate_classifier, train_activity_classifier,
    AccelStream, ActivityModels, AudioFrame, EventDetector, Identifier, RiskyAlarm, ShockModel,
};
use activitymon_service::{
    log_text, process_records, AlertPayload, AlertView, AppConfig, IngestLine, LogEntry, Models, Monitor,
    PipelineSettings, PrivacyMode, WireBody,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::{
    DetectArgs, EnrollArgs, EvalArgs, ModelPaths, RecipeName, ReplayArgs, ServeArgs, SynthArgs, Target, Task, TrainArgs,
};

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports always serialize") + "\n"
}

/// Writes to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

/// SHA-256 over the manifest and every listed file, in manifest order.
pub fn corpus_checksum(dir: &Path) -> CliResult<String> {
    let manifest = activitymon_core::synth::CorpusManifest::load(dir)?;
    let mut files = vec![PathBuf::from(activitymon_core::synth::CORPUS_MANIFEST)];
    for e in &manifest.entries {
        files.push(PathBuf::from(&e.trace));
        files.extend(e.audio.as_ref().map(PathBuf::from));
    }
    let mut h = Sha256::new();
    for f in files {
        let path = dir.join(&f);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        h.update(f.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let recipe = Recipe::by_name(match a.recipe {
        RecipeName::Activities => "activities",
        RecipeName::Events => "events",
        RecipeName::Auth => "auth",
    })?;
    let manifest = gen_corpus(&recipe, a.seed, &a.out)?;
    println!("entries {}", manifest.entries.len());
    println!("sha256 {}", corpus_checksum(&a.out)?);
    Ok(())
}

fn corpus(dir: &Path) -> CliResult<Vec<CorpusItem>> {
    Ok(load_corpus(dir)?.1)
}

#[derive(Serialize)]
struct ClassFit {
    class: activitymon_core::ActivityClass,
    iterations: usize,
    converged: bool,
    final_log_likelihood: f64,
}

pub fn train_activity(cfg: &AppConfig, a: TrainArgs) -> CliResult<()> {
    let items = corpus(&a.corpus)?;
    let train = activity_instances(&items, Split::Train, &cfg.activity.features)?;
    let training = train_activity_classifier(&train, &cfg.activity.train)?;
    training.models.save(&a.out)?;
    let fits: Vec<ClassFit> = training
        .fits
        .iter()
        .map(|f| ClassFit {
            class: f.class,
            iterations: f.iterations,
            converged: f.converged,
            final_log_likelihood: f.final_log_likelihood,
        })
        .collect();
    print!(
        "{}",
        json(&serde_json::json!({ "instances": train.len(), "fits": fits }))
    );
    Ok(())
}

pub fn train_shock(cfg: &AppConfig, a: TrainArgs) -> CliResult<()> {
    let items = corpus(&a.corpus)?;
    let examples = activitymon_core::synth::shock_examples(&items, &cfg.events)?;
    let (model, training) = activitymon_core::events::train_shock_model(&examples, &cfg.shock_train)?;
    model.save(&a.out)?;
    print!(
        "{}",
        json(&serde_json::json!({
            "examples": examples.len(),
            "shocks": examples.iter().filter(|(_, s)| *s).count(),
            "final_loss": training.final_loss,
            "training_accuracy": training.training_accuracy,
        }))
    );
    Ok(())
}

pub fn enroll(cfg: &AppConfig, a: EnrollArgs) -> CliResult<()> {
    let items = corpus(&a.corpus)?;
    let mut auth = cfg.auth.clone();
    if let Some(f) = a.features {
        auth.feature_set = f.into();
    }
    let windows = labelled_windows(&items, Split::Train, auth.window_s)?;
    let id = enroll_users(&windows, &auth)?;
    id.save(&a.out)?;
    print!(
        "{}",
        json(&serde_json::json!({ "feature_set": id.feature_set, "windows": windows.len(), "users": id.profiles }))
    );
    Ok(())
}

fn model_path(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| CliError::Usage(format!("no {what} given (flag or [service] entry)")))
}

fn load_models(cfg: &AppConfig, paths: &ModelPaths) -> CliResult<Models> {
    let pick = |flag: &Option<PathBuf>, configured: &Option<PathBuf>| flag.clone().or_else(|| configured.clone());
    let s = &cfg.service;
    Ok(Models {
        activity: pick(&paths.activity_models, &s.activity_models)
            .map(|p| ActivityModels::load(&p).map(Arc::new))
            .transpose()?,
        shock: pick(&paths.shock_model, &s.shock_model)
            .map(|p| ShockModel::load(&p).map(Arc::new))
            .transpose()?,
        identifier: pick(&paths.identifier, &s.identifier)
            .map(|p| Identifier::load(&p).map(Arc::new))
            .transpose()?,
    })
}

/// Mean peak-to-valley level of a whole stream (g).
fn mean_level(stream: &AccelStream, cfg: &AppConfig) -> CliResult<f64> {
    let mags = high_passed_magnitude(stream, cfg.activity.features.cutoff_hz)?;
    let series: Vec<(f64, f64)> = stream.samples.iter().map(|s| s.t).zip(mags).collect();
    let points = activity_level(&series, cfg.activity.min_prominence)?;
    Ok(if points.is_empty() {
        0.0
    } else {
        points.iter().map(|p| p.level).sum::<f64>() / points.len() as f64
    })
}

pub fn eval(cfg: &AppConfig, a: EvalArgs) -> CliResult<()> {
    let items = corpus(&a.corpus)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let mut plot = Vec::new();
    let report = match a.task {
        Task::Activity => {
            let path = model_path(
                &a.models.activity_models,
                &cfg.service.activity_models,
                "activity models",
            )?;
            let models = ActivityModels::load(&path)?;
            let test = activity_instances(&items, Split::Test, &cfg.activity.features)?;
            let confusion = evaluate_classifier(&models, &test)?;
            // Test instances laid end to end on one time axis.
            let mut rows = Vec::new();
            let mut t = 0.0;
            for i in items.iter().filter(|i| i.entry.split == Some(Split::Test)) {
                let stream = i.trace.stream.clone().into_g();
                let x = activitymon_core::activity::stream_instance_feature(&stream, &cfg.activity.features)?;
                rows.push(PlotRow {
                    t,
                    level: mean_level(&stream, cfg)?,
                    class: Some(classify_activity(&x, &models)?.0),
                });
                t += stream.duration().max(cfg.activity.features.instance_s);
            }
            write_plot_data(&mut plot, &rows).expect("writing to memory");
            let report = activitymon_core::activity::EvaluationReport::from(&confusion);
            println!("accuracy {:.4}", report.accuracy);
            json(&report)
        }
        Task::Events => {
            let path = model_path(&a.models.shock_model, &cfg.service.shock_model, "shock model")?;
            let model = ShockModel::load(&path)?;
            let exp = event_experiment(&items, &cfg.events, &model)?;
            writeln!(plot, "# episode label three_step_alarms impact_only_alarms").expect("writing to memory");
            for e in &exp.episodes {
                writeln!(
                    plot,
                    "{} {} {} {}",
                    e.id,
                    e.label,
                    e.three_step.len(),
                    e.impact_only.len()
                )
                .expect("writing to memory");
            }
            println!(
                "three-step detected {}/{} false alarms {}",
                exp.three_step.detected, exp.three_step.risky_episodes, exp.three_step.false_alarms
            );
            println!(
                "impact-only detected {}/{} false alarms {}",
                exp.impact_only.detected, exp.impact_only.risky_episodes, exp.impact_only.false_alarms
            );
            json(&exp)
        }
        Task::Auth => {
            let path = model_path(&a.models.identifier, &cfg.service.identifier, "identifier")?;
            let id = Identifier::load(&path)?;
            let test = labelled_windows(&items, Split::Test, cfg.auth.window_s)?;
            let ev = evaluate_identifier(&id, &test, cfg.auth.vote_windows)?;
            writeln!(plot, "# user support precision recall f_measure roc_area").expect("writing to memory");
            for u in &ev.metrics.users {
                writeln!(
                    plot,
                    "{} {} {:.6} {:.6} {:.6} {:.6}",
                    u.user_id, u.support, u.row.precision, u.row.recall, u.row.f_measure, u.row.roc_area
                )
                .expect("writing to memory");
            }
            println!(
                "window accuracy {:.4} voted accuracy {:.4}",
                ev.window_accuracy, ev.voted_accuracy
            );
            json(&ev)
        }
    };
    write_file(&a.out.join("report.json"), report.as_bytes())?;
    write_file(&a.out.join("plot.dat"), &plot)?;
    Ok(())
}

fn read_input(trace: &Path, audio: Option<&Path>) -> CliResult<(AccelStream, Vec<AudioFrame>)> {
    let stream = read_trace(trace)?;
    let audio = audio.map(read_audio).transpose()?.unwrap_or_default();
    Ok((stream, audio))
}

fn alarm_lines<'a>(alarms: impl IntoIterator<Item = &'a RiskyAlarm>) -> String {
    alarms
        .into_iter()
        .map(|a| serde_json::to_string(a).expect("alarms serialize") + "\n")
        .collect()
}

pub fn detect(cfg: &AppConfig, a: DetectArgs) -> CliResult<()> {
    let (stream, audio) = read_input(&a.input.trace, a.input.audio.as_deref())?;
    let stream = stream.into_g();
    let path = model_path(&a.shock_model, &cfg.service.shock_model, "shock model")?;
    let model = Arc::new(ShockModel::load(&path)?);
    let mode = a.mode.map_or(cfg.monitor.detection_mode, Into::into);
    let mut detector = EventDetector::new(
        stream.device_id.clone(),
        stream.rate_hz,
        mode,
        cfg.events.clone(),
        Some(model),
    )?;
    let events = detect_records(&mut detector, &merge_records(&stream, &audio))?;
    emit(a.out.as_deref(), &alarm_lines(alarms(&events)))
}

fn risky(entries: &[LogEntry]) -> Vec<&RiskyAlarm> {
    entries
        .iter()
        .filter_map(|e| match e {
            LogEntry::Alert(a) => match &a.payload {
                AlertPayload::RiskyEvent(alarm) => Some(alarm),
                _ => None,
            },
            _ => None,
        })
        .collect()
}

pub fn replay(cfg: &AppConfig, a: ReplayArgs) -> CliResult<()> {
    let (stream, audio) = read_input(&a.input.trace, a.input.audio.as_deref())?;
    let device = a.device.clone().unwrap_or_else(|| stream.device_id.clone());
    match a.against {
        Target::Offline => {
            let models = load_models(cfg, &a.models)?;
            let dev = cfg.devices.get(&device);
            let settings = PipelineSettings {
                analytics: cfg.analytics(),
                monitor: cfg.monitor.clone(),
                privacy: dev.map_or(PrivacyMode::Full, |d| d.privacy),
                owner: dev.and_then(|d| d.owner.clone()),
            };
            let g = stream.into_g();
            let entries = process_records(&device, g.rate_hz, &settings, &models, &merge_records(&g, &audio))?;
            if let Some(p) = &a.log {
                write_file(p, log_text(&entries).as_bytes())?;
            }
            emit(a.out.as_deref(), &alarm_lines(risky(&entries)))
        }
        Target::Serve => {
            if a.log.is_some() {
                return Err(CliError::Usage("--log applies to offline replay only".into()));
            }
            let token = match &a.token {
                Some(t) => t.clone(),
                None => cfg
                    .devices
                    .get(&device)
                    .map(|d| d.token.clone())
                    .ok_or_else(|| CliError::Usage(format!("no token for device {device}: pass --token")))?,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Remote(e.to_string()))?;
            let found = rt.block_on(remote_replay(cfg, &device, &token, &stream, &audio))?;
            emit(a.out.as_deref(), &alarm_lines(&found))
        }
    }
}

async fn get_json<T: serde::de::DeserializeOwned>(client: &reqwest::Client, url: &str) -> CliResult<T> {
    let resp = client
        .get(url)
        .send()
        .await
        .map_err(|e| CliError::Remote(e.to_string()))?;
    if !resp.status().is_success() {
        let status = resp.status();
        let body = resp.text().await.unwrap_or_default();
        return Err(CliError::Remote(format!("GET {url}: {status} {body}")));
    }
    resp.json().await.map_err(|e| CliError::Remote(e.to_string()))
}

/// Streams the trace over the ingest socket, waits for every ack, then reads
/// back the device's risky-event alerts raised since the trace began.
async fn remote_replay(
    cfg: &AppConfig,
    device: &str,
    token: &str,
    stream: &AccelStream,
    audio: &[AudioFrame],
) -> CliResult<Vec<RiskyAlarm>> {
    use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};

    let base = format!("http://{}/api/v1", cfg.service.http_addr);
    let client = reqwest::Client::new();
    let status: activitymon_service::DeviceStatus =
        get_json(&client, &format!("{base}/devices/{device}/status")).await?;
    let first_seq = status.last_seq.map_or(0, |s| s + 1);

    let mut bodies = vec![WireBody::Header {
        rate_hz: stream.rate_hz,
        unit: stream.unit,
    }];
    bodies.extend(merge_records(stream, audio).into_iter().map(|r| match r {
        TraceRecord::Sample(s) => WireBody::Sample(s),
        TraceRecord::Audio(f) => WireBody::Audio(f),
    }));
    let mut text = String::new();
    for (i, body) in bodies.into_iter().enumerate() {
        let line = IngestLine {
            device_id: device.to_string(),
            seq: first_seq + i as u64,
            token: token.to_string(),
            body,
        };
        text.push_str(&line.to_line());
        text.push('\n');
    }
    let expected = text.lines().count();

    let socket = tokio::net::TcpStream::connect(cfg.service.ingest_addr)
        .await
        .map_err(|e| CliError::Remote(format!("connect {}: {e}", cfg.service.ingest_addr)))?;
    let (read, mut write) = socket.into_split();
    let writer = tokio::spawn(async move {
        write.write_all(text.as_bytes()).await?;
        write.shutdown().await
    });
    let mut lines = BufReader::new(read).lines();
    let mut acks = 0;
    while let Some(l) = lines.next_line().await.map_err(|e| CliError::Remote(e.to_string()))? {
        let ack: activitymon_service::Ack =
            serde_json::from_str(&l).map_err(|e| CliError::Remote(format!("bad ack {l:?}: {e}")))?;
        if ack.status == activitymon_service::AckStatus::Error {
            return Err(CliError::Remote(format!(
                "record {:?} refused: {}",
                ack.seq,
                ack.error.unwrap_or_default()
            )));
        }
        acks += 1;
    }
    writer
        .await
        .map_err(|e| CliError::Remote(e.to_string()))?
        .map_err(|e| CliError::Remote(e.to_string()))?;
    if acks != expected {
        return Err(CliError::Remote(format!("{acks} acks for {expected} records")));
    }

    let from = stream.t_start().unwrap_or(0.0);
    let url = format!("{base}/alerts?device={device}&kind=risky-event&from={from}");
    let found: activitymon_service::api::AlertsResponse = get_json(&client, &url).await?;
    let mut views: Vec<AlertView> = found.alerts;
    views.sort_by_key(|v| v.index);
    Ok(views
        .into_iter()
        .filter_map(|v| match v.alert.payload {
            AlertPayload::RiskyEvent(alarm) => Some(alarm),
            _ => None,
        })
        .collect())
}

pub fn serve(cfg: AppConfig, a: ServeArgs) -> CliResult<()> {
    let models = load_models(&cfg, &a.models)?;
    let monitor = Arc::new(Monitor::open(cfg, models)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Remote(e.to_string()))?;
    rt.block_on(async {
        tokio::select! {
            r = activitymon_service::serve(monitor.clone()) => r.map_err(CliError::from),
            _ = tokio::signal::ctrl_c() => {
                tracing::info!("shutting down");
                Ok(())
            }
        }
    })?;
    monitor.checkpoint()?;
    Ok(())
}
