//! HTTP query and control API under `/api/v1`. Paths and bodies are frozen
//! in `docs/api.md`.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::broadcast;

use crate::config::RuntimeSettings;
use crate::error::{ServiceError, ServiceResult};
use crate::monitor::{AlertQuery, HistoryQuery, Monitor};
use crate::records::CALORIE_NOTE;

/// Error body: `{"error": "...", "kind": "..."}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub kind: String,
}

struct Failure(ServiceError);

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        Failure(e)
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            ServiceError::UnknownDevice(_) => (StatusCode::NOT_FOUND, "unknown-device"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
            ServiceError::Unauthorized(_) => (StatusCode::UNAUTHORIZED, "unauthorized"),
            ServiceError::Malformed(_) => (StatusCode::BAD_REQUEST, "malformed"),
            ServiceError::Config(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid-config"),
            ServiceError::Rejected(_) | ServiceError::Core(_) => (StatusCode::CONFLICT, "rejected"),
            ServiceError::Io { .. } | ServiceError::Corrupt(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        let body = ApiError {
            error: self.0.to_string(),
            kind: kind.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, Failure>;

/// Largest accepted request body; snapshots with audio are the big ones.
pub const MAX_BODY_BYTES: usize = 64 << 20;

pub fn router(monitor: Arc<Monitor>) -> Router {
    Router::new()
        .route("/api/v1/status", get(status))
        .route("/api/v1/devices/{id}/status", get(device_status))
        .route("/api/v1/devices/{id}/history", get(history))
        .route("/api/v1/devices/{id}/stats", get(stats))
        .route("/api/v1/devices/{id}/snapshot", post(snapshot))
        .route("/api/v1/devices/{id}/alerts/{index}/ack", post(acknowledge))
        .route("/api/v1/alerts", get(alerts))
        .route("/api/v1/alerts/stream", get(alert_stream))
        .route("/api/v1/config", get(get_config).put(put_config))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(monitor)
}

pub async fn run(listener: TcpListener, monitor: Arc<Monitor>) -> ServiceResult<()> {
    axum::serve(listener, router(monitor))
        .await
        .map_err(|e| ServiceError::Config(format!("http server failed: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatusResponse {
    pub devices: Vec<crate::monitor::DeviceStatus>,
}

async fn status(State(m): State<Arc<Monitor>>) -> ApiResult<StatusResponse> {
    Ok(Json(StatusResponse { devices: m.status() }))
}

async fn device_status(
    State(m): State<Arc<Monitor>>,
    Path(id): Path<String>,
) -> ApiResult<crate::monitor::DeviceStatus> {
    Ok(Json(m.device_status(&id)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub records: Vec<crate::records::HistoryRecord>,
    pub kcal_note: String,
}

async fn history(
    State(m): State<Arc<Monitor>>,
    Path(id): Path<String>,
    Query(q): Query<HistoryQuery>,
) -> ApiResult<HistoryResponse> {
    Ok(Json(HistoryResponse {
        records: m.history(&id, &q)?,
        kcal_note: CALORIE_NOTE.to_string(),
    }))
}

#[derive(Debug, Default, Deserialize)]
struct RangeQuery {
    from: Option<f64>,
    to: Option<f64>,
}

async fn stats(
    State(m): State<Arc<Monitor>>,
    Path(id): Path<String>,
    Query(q): Query<RangeQuery>,
) -> ApiResult<crate::monitor::DeviceStats> {
    Ok(Json(m.stats(&id, q.from, q.to)?))
}

#[derive(Debug, Deserialize)]
struct SnapshotQuery {
    seq: u64,
}

async fn snapshot(
    State(m): State<Arc<Monitor>>,
    Path(id): Path<String>,
    Query(q): Query<SnapshotQuery>,
    headers: HeaderMap,
    body: String,
) -> ApiResult<crate::wire::Ack> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| ServiceError::Unauthorized(id.clone()))?
        .to_string();
    let ack = tokio::task::spawn_blocking(move || match m.ingest_snapshot(&id, &token, q.seq, &body) {
        // Ingest treats an unknown device as an authentication failure.
        Err(ServiceError::UnknownDevice(d)) => Err(ServiceError::Unauthorized(d)),
        other => other,
    })
    .await
    .map_err(|e| ServiceError::Rejected(format!("snapshot task failed: {e}")))??;
    Ok(Json(ack))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct AckRequest {
    #[serde(default)]
    pub note: String,
}

async fn acknowledge(
    State(m): State<Arc<Monitor>>,
    Path((id, index)): Path<(String, usize)>,
    Json(req): Json<AckRequest>,
) -> ApiResult<crate::monitor::AlertView> {
    Ok(Json(m.acknowledge(&id, index, &req.note)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AlertsResponse {
    pub alerts: Vec<crate::monitor::AlertView>,
}

async fn alerts(State(m): State<Arc<Monitor>>, Query(q): Query<AlertQuery>) -> ApiResult<AlertsResponse> {
    Ok(Json(AlertsResponse { alerts: m.alerts(&q)? }))
}

/// Server-sent events, one `alert` event per new alert. A subscriber that
/// falls behind gets a `lagged` event with the number of alerts it missed.
async fn alert_stream(State(m): State<Arc<Monitor>>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let stream = futures::stream::unfold(m.subscribe(), |mut rx| async move {
        let event = match rx.recv().await {
            Ok(view) => Event::default()
                .event("alert")
                .json_data(&view)
                .expect("alert views always serialize"),
            Err(broadcast::error::RecvError::Lagged(n)) => Event::default().event("lagged").data(n.to_string()),
            Err(broadcast::error::RecvError::Closed) => return None,
        };
        Some((Ok(event), rx))
    });
    Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}

async fn get_config(State(m): State<Arc<Monitor>>) -> ApiResult<RuntimeSettings> {
    Ok(Json(m.settings()))
}

async fn put_config(State(m): State<Arc<Monitor>>, Json(new): Json<RuntimeSettings>) -> ApiResult<RuntimeSettings> {
    let settings = tokio::task::spawn_blocking(move || m.update_settings(new))
        .await
        .map_err(|e| ServiceError::Rejected(format!("settings task failed: {e}")))??;
    Ok(Json(settings))
}
