//! Multi-device monitoring server: per-device stream pipelines, durable
//! history and alert logs, a line-JSON ingest socket and an HTTP query API.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod config;
pub mod error;
pub mod monitor;
pub mod pipeline;
pub mod records;
pub mod store;
pub mod tcp;
pub mod wire;

pub use config::{AppConfig, DeviceConfig, MonitorConfig, PrivacyMode, RuntimeSettings, ServiceSection};
pub use error::{ServiceError, ServiceResult};
pub use monitor::{AlertQuery, AlertView, DeviceStats, DeviceStatus, HistoryQuery, Monitor};
pub use pipeline::{log_text, process_records, DevicePipeline, Models, PipelineSettings, PipelineStatus};
pub use records::{calorie_estimate, AlertKind, AlertPayload, AlertRecord, HistoryRecord, LogEntry, CALORIE_NOTE};
pub use wire::{Ack, AckStatus, IngestLine, Snapshot, WireBody};

use std::sync::Arc;

/// Runs the ingest socket and the HTTP API until either fails.
pub async fn serve(monitor: Arc<Monitor>) -> ServiceResult<()> {
    let cfg = monitor.config().service;
    let ingest = tokio::net::TcpListener::bind(cfg.ingest_addr)
        .await
        .map_err(|e| ServiceError::Config(format!("cannot bind ingest address {}: {e}", cfg.ingest_addr)))?;
    let http = tokio::net::TcpListener::bind(cfg.http_addr)
        .await
        .map_err(|e| ServiceError::Config(format!("cannot bind http address {}: {e}", cfg.http_addr)))?;
    tracing::info!(ingest = %cfg.ingest_addr, http = %cfg.http_addr, "serving");
    tokio::select! {
        r = tcp::run(ingest, monitor.clone()) => r,
        r = api::run(http, monitor.clone()) => r,
    }
}
