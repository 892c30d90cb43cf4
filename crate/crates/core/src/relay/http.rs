use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

use super::board::{LogEntry, Relay, RelayError};
use crate::protocol::{Message, DEFAULT_PHASE_TIMEOUT};
use crate::specfile::SessionSetup;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    /// `None` keeps boards in memory only.
    pub data_dir: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            timeout_secs: DEFAULT_PHASE_TIMEOUT.as_secs(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
}

struct ApiError(StatusCode, String);

impl From<RelayError> for ApiError {
    fn from(e: RelayError) -> Self {
        let code = match e {
            RelayError::UnknownSession(_) => StatusCode::NOT_FOUND,
            RelayError::Conflict(_) => StatusCode::CONFLICT,
            RelayError::Malformed(_) => StatusCode::BAD_REQUEST,
            RelayError::Rejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
            RelayError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type Api<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
struct FromQuery {
    #[serde(default)]
    from: u64,
    limit: Option<usize>,
}

pub fn router(relay: Arc<Relay>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_setup))
        .route("/sessions/{id}/messages", post(post_message).get(fetch_log))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/events", get(events))
        .with_state(relay)
}

async fn create_session(
    State(relay): State<Arc<Relay>>,
    body: Result<Json<SessionSetup>, JsonRejection>,
) -> Api<Created> {
    let Json(setup) = body?;
    Ok(Json(Created { session_id: relay.create_session(setup)? }))
}

async fn list_sessions(State(relay): State<Arc<Relay>>) -> Json<Vec<String>> {
    Json(relay.session_ids())
}

async fn get_setup(State(relay): State<Arc<Relay>>, Path(id): Path<String>) -> Api<SessionSetup> {
    Ok(Json(relay.setup(&id)?))
}

async fn post_message(
    State(relay): State<Arc<Relay>>,
    Path(id): Path<String>,
    body: Result<Json<Message>, JsonRejection>,
) -> Api<super::Receipt> {
    let Json(msg) = body?;
    Ok(Json(relay.post_message(&id, msg)?))
}

async fn fetch_log(
    State(relay): State<Arc<Relay>>,
    Path(id): Path<String>,
    Query(q): Query<FromQuery>,
) -> Api<super::Page> {
    Ok(Json(relay.fetch_log(&id, q.from, q.limit)?))
}

async fn transcript(State(relay): State<Arc<Relay>>, Path(id): Path<String>) -> Api<crate::audit::Transcript> {
    Ok(Json(relay.export_transcript(&id)?))
}

async fn status(State(relay): State<Arc<Relay>>, Path(id): Path<String>) -> Api<super::BoardStatus> {
    Ok(Json(relay.status(&id)?))
}

fn sse_event(e: &LogEntry) -> Event {
    Event::default()
        .event("message")
        .id(e.index.to_string())
        .json_data(e)
        .expect("log entry serializes")
}

/// Replays the log from `from` (or after `Last-Event-ID`), then streams each
/// new entry as a `message` event carrying the full log entry.
async fn events(
    State(relay): State<Arc<Relay>>,
    Path(id): Path<String>,
    Query(q): Query<FromQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok())
        .map(|i| i + 1);
    let from = resume.unwrap_or(q.from);
    // Subscribe before reading the backlog so nothing falls in between.
    let rx = relay.subscribe(&id)?;
    let mut backlog = Vec::new();
    let mut next = from;
    loop {
        let page = relay.fetch_log(&id, next, None)?;
        if page.messages.is_empty() {
            break;
        }
        next = page.next_index;
        backlog.extend(page.messages);
    }
    let live = stream::unfold((rx, next, relay, id), |(mut rx, mut next, relay, id)| async move {
        loop {
            match rx.recv().await {
                Ok(e) if e.index < next => continue,
                Ok(e) => {
                    next = e.index + 1;
                    return Some((vec![e], (rx, next, relay, id)));
                }
                // Fell behind the channel: catch up from the log itself.
                Err(RecvError::Lagged(_)) => {
                    let page = relay.fetch_log(&id, next, None).ok()?;
                    next = page.next_index;
                    return Some((page.messages, (rx, next, relay, id)));
                }
                Err(RecvError::Closed) => return None,
            }
        }
    })
    .flat_map(stream::iter);
    let all = stream::iter(backlog).chain(live).map(|e| Ok(sse_event(&e)));
    Ok(Sse::new(all).keep_alive(KeepAlive::default()))
}

/// Binds `config.bind` and returns the bound address with the server future.
pub async fn bind(
    config: &ServeConfig,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let relay = match &config.data_dir {
        Some(dir) => Relay::open(dir, config.timeout_secs).map_err(std::io::Error::other)?,
        None => Relay::in_memory(config.timeout_secs),
    };
    bind_relay(Arc::new(relay), config.bind).await
}

pub async fn bind_relay(
    relay: Arc<Relay>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let server = async move {
        axum::serve(listener, router(relay))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    };
    Ok((local, server))
}
