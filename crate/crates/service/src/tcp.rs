//! Persistent-connection ingest: newline-delimited [`IngestLine`]s in, one
//! [`Ack`] line out per input line, in order.
//!
//! [`IngestLine`]: crate::wire::IngestLine

use std::sync::Arc;

use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

use crate::error::{ServiceError, ServiceResult};
use crate::monitor::Monitor;
use crate::wire::Ack;

/// Longest accepted line; a longer one closes the connection.
pub const MAX_LINE_BYTES: u64 = 4 << 20;

pub async fn run(listener: TcpListener, monitor: Arc<Monitor>) -> ServiceResult<()> {
    loop {
        let (socket, peer) = listener
            .accept()
            .await
            .map_err(|e| ServiceError::Config(format!("ingest accept failed: {e}")))?;
        let monitor = monitor.clone();
        tokio::spawn(async move {
            if let Err(e) = handle(socket, monitor).await {
                tracing::debug!(%peer, error = %e, "ingest connection closed");
            }
        });
    }
}

async fn handle(socket: TcpStream, monitor: Arc<Monitor>) -> std::io::Result<()> {
    let (read, mut write) = socket.into_split();
    let mut reader = BufReader::new(read);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = (&mut reader)
            .take(MAX_LINE_BYTES + 1)
            .read_until(b'\n', &mut buf)
            .await?;
        if n == 0 {
            return Ok(());
        }
        if buf.last() != Some(&b'\n') && n as u64 > MAX_LINE_BYTES {
            let ack = Ack::error(None, &ServiceError::Malformed("line too long".into()));
            write.write_all(format!("{}\n", ack_line(&ack)).as_bytes()).await?;
            return Ok(());
        }
        let text = String::from_utf8_lossy(&buf).trim().to_string();
        if text.is_empty() {
            continue;
        }
        // Session locks and file appends block; keep them off the reactor.
        let m = monitor.clone();
        let ack = tokio::task::spawn_blocking(move || m.ingest_text(&text))
            .await
            .unwrap_or_else(|e| Ack::error(None, &ServiceError::Rejected(format!("ingest task failed: {e}"))));
        write.write_all(format!("{}\n", ack_line(&ack)).as_bytes()).await?;
    }
}

fn ack_line(ack: &Ack) -> String {
    serde_json::to_string(ack).expect("acks always serialize")
}
