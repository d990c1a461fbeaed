mod common;

use std::sync::Arc;
use std::time::Duration;

use activitymon_core::ActivityClass;
use activitymon_service::api::{router, AlertsResponse, ApiError, HistoryResponse, StatusResponse};
use activitymon_service::{Ack, AckStatus, AlertView, Monitor, PrivacyMode, RuntimeSettings};
use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::*;
use futures::StreamExt;
use serde::de::DeserializeOwned;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<(String, Option<&str>)>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some((text, bearer)) => {
            if let Some(token) = bearer {
                req = req.header(header::AUTHORIZATION, format!("Bearer {token}"));
            } else {
                req = req.header(header::CONTENT_TYPE, "application/json");
            }
            Body::from(text)
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn get<T: DeserializeOwned>(app: &Router, uri: &str) -> T {
    let (status, body) = call(app, Method::GET, uri, None).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

fn setup(dir: &std::path::Path) -> (Arc<Monitor>, Router) {
    let mut cfg = app_config(dir, &["a", "b"]);
    cfg.devices.get_mut("b").unwrap().privacy = PrivacyMode::Coarse;
    let m = Arc::new(Monitor::open(cfg, models()).unwrap());
    let app = router(m.clone());
    (m, app)
}

#[tokio::test]
async fn query_endpoints_mirror_the_monitor() {
    let dir = tempfile::tempdir().unwrap();
    let (m, app) = setup(dir.path());
    let trace = fall(3, "a");
    let (status, body) = call(
        &app,
        Method::POST,
        "/api/v1/devices/a/snapshot?seq=0",
        Some((snapshot_body(&trace.stream, &trace.audio), Some(TOKEN))),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let ack: Ack = serde_json::from_slice(&body).unwrap();
    assert_eq!(ack.status, AckStatus::Ok);
    let day = activity_day(
        "b",
        &[(ActivityClass::Running, 40.0), (ActivityClass::Walking, 20.0)],
        4,
    );
    let (status, _) = call(
        &app,
        Method::POST,
        "/api/v1/devices/b/snapshot?seq=0",
        Some((snapshot_body(&day, &[]), Some(TOKEN))),
    )
    .await;
    assert_eq!(status, StatusCode::OK);

    let s: StatusResponse = get(&app, "/api/v1/status").await;
    assert_eq!(s.devices, m.status());
    let one: activitymon_service::DeviceStatus = get(&app, "/api/v1/devices/a/status").await;
    assert_eq!(one, m.device_status("a").unwrap());

    for uri in [
        "/api/v1/devices/a/history",
        "/api/v1/devices/a/history?from=5&to=12",
        "/api/v1/devices/a/history?class=walking",
        "/api/v1/devices/b/history?class=running",
    ] {
        let h: HistoryResponse = get(&app, uri).await;
        let q = uri.split_once('?').map_or("", |(_, q)| q);
        let query = serde_urlencoded_like(q);
        let id = if uri.contains("/a/") { "a" } else { "b" };
        assert_eq!(h.records, m.history(id, &query).unwrap(), "{uri}");
        assert_eq!(h.kcal_note, "indicative only");
    }
    // Coarse devices carry no class, so a class filter matches nothing.
    let h: HistoryResponse = get(&app, "/api/v1/devices/b/history?class=running").await;
    assert!(h.records.is_empty());

    let all: AlertsResponse = get(&app, "/api/v1/alerts").await;
    assert_eq!(all.alerts, m.alerts(&Default::default()).unwrap());
    assert!(!all.alerts.is_empty());
    let risky: AlertsResponse = get(&app, "/api/v1/alerts?device=a&kind=risky-event&unacknowledged=true").await;
    assert!(risky
        .alerts
        .iter()
        .all(|v| v.alert.kind() == activitymon_service::AlertKind::RiskyEvent));
    assert_eq!(risky.alerts.len(), 1);

    let stats: activitymon_service::DeviceStats = get(&app, "/api/v1/devices/b/stats").await;
    assert_eq!(stats, m.stats("b", None, None).unwrap());
    assert!(stats.class_shares.is_none());

    let (status, body) = call(&app, Method::GET, "/api/v1/devices/ghost/history", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let err: ApiError = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.kind, "unknown-device");
}

/// The handful of query strings used above, parsed the way the handler does.
fn serde_urlencoded_like(q: &str) -> activitymon_service::HistoryQuery {
    let mut out = activitymon_service::HistoryQuery::default();
    for pair in q.split('&').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').unwrap();
        match k {
            "from" => out.from = Some(v.parse().unwrap()),
            "to" => out.to = Some(v.parse().unwrap()),
            "class" => out.class = Some(serde_json::from_str(&format!("\"{v}\"")).unwrap()),
            _ => panic!("{k}"),
        }
    }
    out
}

#[tokio::test]
async fn acknowledgement_is_recorded_not_destructive() {
    let dir = tempfile::tempdir().unwrap();
    let (m, app) = setup(dir.path());
    let trace = fall(5, "a");
    m.ingest_snapshot("a", TOKEN, 0, &snapshot_body(&trace.stream, &trace.audio))
        .unwrap();
    let before: AlertsResponse = get(&app, "/api/v1/alerts?unacknowledged=true").await;
    let target = &before.alerts[0];
    let uri = format!("/api/v1/devices/{}/alerts/{}/ack", target.device_id, target.index);
    let (status, body) = call(
        &app,
        Method::POST,
        &uri,
        Some((r#"{"note":"called the user"}"#.into(), None)),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let view: AlertView = serde_json::from_slice(&body).unwrap();
    assert_eq!(view.acks[0].note, "called the user");

    let after: AlertsResponse = get(&app, "/api/v1/alerts?unacknowledged=true").await;
    assert_eq!(after.alerts.len(), before.alerts.len() - 1);
    let all: AlertsResponse = get(&app, "/api/v1/alerts").await;
    assert_eq!(all.alerts.len(), before.alerts.len());

    let (status, _) = call(
        &app,
        Method::POST,
        "/api/v1/devices/a/alerts/0/ack",
        Some(("{}".into(), None)),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND, "entry 0 is not an alert");
}

#[tokio::test]
async fn snapshot_requires_the_device_token() {
    let dir = tempfile::tempdir().unwrap();
    let (_m, app) = setup(dir.path());
    let trace = fall(6, "a");
    let body = snapshot_body(&trace.stream, &[]);
    for (uri, token, expected) in [
        (
            "/api/v1/devices/a/snapshot?seq=0",
            Some("wrong"),
            StatusCode::UNAUTHORIZED,
        ),
        (
            "/api/v1/devices/ghost/snapshot?seq=0",
            Some(TOKEN),
            StatusCode::UNAUTHORIZED,
        ),
        ("/api/v1/devices/a/snapshot?seq=0", None, StatusCode::UNAUTHORIZED),
    ] {
        let mut req = Request::builder().method(Method::POST).uri(uri);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let resp = app
            .clone()
            .oneshot(req.body(Body::from(body.clone())).unwrap())
            .await
            .unwrap();
        assert_eq!(resp.status(), expected, "{uri} {token:?}");
    }
    let (status, _) = call(
        &app,
        Method::POST,
        "/api/v1/devices/a/snapshot?seq=0",
        Some(("{\"t\":oops}".into(), Some(TOKEN))),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn config_round_trips_and_rejects_invalid_values() {
    let dir = tempfile::tempdir().unwrap();
    let (m, app) = setup(dir.path());
    let mut settings: RuntimeSettings = get(&app, "/api/v1/config").await;
    assert_eq!(settings, m.settings());
    settings.monitor.idle_timeout_s = 600.0;
    settings.privacy.insert("a".into(), PrivacyMode::Coarse);
    let (status, body) = call(
        &app,
        Method::PUT,
        "/api/v1/config",
        Some((serde_json::to_string(&settings).unwrap(), None)),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let back: RuntimeSettings = get(&app, "/api/v1/config").await;
    assert_eq!(back, settings);
    assert_eq!(m.device_status("a").unwrap().privacy, PrivacyMode::Coarse);

    let mut bad = settings.clone();
    bad.monitor.tick_s = -1.0;
    let (status, body) = call(
        &app,
        Method::PUT,
        "/api/v1/config",
        Some((serde_json::to_string(&bad).unwrap(), None)),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ApiError = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.kind, "invalid-config");
    let mut unknown = settings.clone();
    unknown.privacy.insert("ghost".into(), PrivacyMode::Full);
    let (status, _) = call(
        &app,
        Method::PUT,
        "/api/v1/config",
        Some((serde_json::to_string(&unknown).unwrap(), None)),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(get::<RuntimeSettings>(&app, "/api/v1/config").await, settings);

    // Settings survive a restart.
    let cfg = m.config();
    drop(app);
    drop(m);
    let mut fresh = app_config(dir.path(), &["a", "b"]);
    fresh.devices.get_mut("b").unwrap().privacy = PrivacyMode::Coarse;
    let reopened = Monitor::open(fresh, models()).unwrap();
    assert_eq!(reopened.settings(), settings);
    assert_eq!(reopened.config().monitor, cfg.monitor);
}

#[tokio::test]
async fn alert_stream_pushes_to_every_subscriber() {
    let dir = tempfile::tempdir().unwrap();
    let (m, app) = setup(dir.path());
    let mut streams = Vec::new();
    for _ in 0..2 {
        let resp = app
            .clone()
            .oneshot(Request::get("/api/v1/alerts/stream").body(Body::empty()).unwrap())
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        assert_eq!(resp.headers()[header::CONTENT_TYPE], "text/event-stream");
        streams.push(resp.into_body().into_data_stream());
    }
    let trace = fall(7, "a");
    let m2 = m.clone();
    tokio::task::spawn_blocking(move || {
        m2.ingest_snapshot("a", TOKEN, 0, &snapshot_body(&trace.stream, &trace.audio))
            .unwrap()
    })
    .await
    .unwrap();
    let expected = m.alerts(&Default::default()).unwrap();
    for s in &mut streams {
        let mut text = String::new();
        while !text.contains("\n\n") {
            let chunk = tokio::time::timeout(Duration::from_secs(5), s.next())
                .await
                .unwrap()
                .unwrap()
                .unwrap();
            text.push_str(std::str::from_utf8(&chunk).unwrap());
        }
        let event = text.split("\n\n").next().unwrap();
        assert!(event.starts_with("event: alert\n"), "{event}");
        let data = event.lines().find_map(|l| l.strip_prefix("data: ")).unwrap();
        let view: AlertView = serde_json::from_str(data).unwrap();
        assert_eq!(view, expected[0]);
    }
}

#[tokio::test]
async fn tcp_ingest_acks_every_line_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _app) = setup(dir.path());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(activitymon_service::tcp::run(listener, m.clone()));

    let trace = fall(8, "a");
    let mut lines = wire_lines(&trace.stream, &trace.audio, 0);
    lines.insert(3, "garbage".into());
    lines.insert(5, lines[4].clone());
    let socket = tokio::net::TcpStream::connect(addr).await.unwrap();
    let (read, mut write) = socket.into_split();
    let sent = lines.clone();
    let writer = tokio::spawn(async move {
        for l in &sent {
            write.write_all(l.as_bytes()).await.unwrap();
            write.write_all(b"\n").await.unwrap();
        }
        write.shutdown().await.unwrap();
    });
    let mut acks = Vec::new();
    let mut reader = BufReader::new(read).lines();
    while let Some(l) = reader.next_line().await.unwrap() {
        acks.push(serde_json::from_str::<Ack>(&l).unwrap());
    }
    writer.await.unwrap();
    assert_eq!(acks.len(), lines.len());
    assert_eq!(acks[3].status, AckStatus::Error);
    assert_eq!(acks[5].status, AckStatus::Duplicate);
    assert!(acks
        .iter()
        .enumerate()
        .all(|(i, a)| i == 3 || i == 5 || a.status == AckStatus::Ok));
    assert_eq!(
        m.device_status("a").unwrap().stream.unwrap().samples,
        trace.stream.len() as u64
    );
}
