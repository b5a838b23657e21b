//! HTTP gateway for simulation sessions.
//!
//! Routes:
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create from a scenario config |
//! | GET | `/sessions` | list |
//! | GET | `/sessions/{id}` | status |
//! | POST | `/sessions/{id}/command` | `{"command": "start" \| "pause" \| "reset"}` |
//! | POST | `/sessions/{id}/attack` | install an attack config |
//! | GET | `/sessions/{id}/telemetry?decimation=N` | server-sent events |
//! | GET | `/sessions/{id}/metrics?reference=ID` | metrics report |
//! | GET | `/sessions/{id}/log?format=csv\|json` | log export |
//!
//! Telemetry frames are SSE events named `snapshot`, `tick`, `lifecycle`,
//! `attack` and `end`, each carrying one JSON object. Every frame except the
//! snapshot has an `id` that increases strictly within a session.

pub mod actor;
pub mod api;
pub mod config;
pub mod telemetry;

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;

use mems_testbed::session::{compute_metrics, export_log, MetricsError, MetricsReport, SessionIds};
use mems_testbed::{AttackConfig, LogFormat, ScenarioConfig, SessionId, SessionState};

use actor::SessionHandle;
use api::{parse_body, ApiError, ApiSession, AttackResponse, CommandRequest, CreatedResponse};
pub use config::GatewayConfig;
use telemetry::Subscriber;

pub struct AppState {
    config: GatewayConfig,
    ids: SessionIds,
    sessions: RwLock<BTreeMap<SessionId, SessionHandle>>,
}

impl AppState {
    pub fn new(config: GatewayConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            ids: SessionIds::default(),
            sessions: RwLock::new(BTreeMap::new()),
        })
    }

    fn handle(&self, raw: &str) -> Result<SessionHandle, ApiError> {
        let id = raw
            .parse::<u64>()
            .map_err(|_| ApiError::NotFound(raw.to_string()))?;
        self.sessions
            .read()
            .expect("session map lock")
            .get(&SessionId(id))
            .cloned()
            .ok_or_else(|| ApiError::NotFound(raw.to_string()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/command", post(session_command))
        .route("/sessions/{id}/attack", post(apply_attack))
        .route("/sessions/{id}/telemetry", get(telemetry))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/log", get(download_log))
        .with_state(state)
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<CreatedResponse>), ApiError> {
    let config: ScenarioConfig = parse_body(&body)?;
    config.validate()?;
    let id = app.ids.next();
    let handle = SessionHandle::spawn(id, config.clone(), &app.config)?;
    let session = handle.summary();
    app.sessions
        .write()
        .expect("session map lock")
        .insert(id, handle);
    Ok((
        StatusCode::CREATED,
        Json(CreatedResponse {
            id,
            config,
            session,
        }),
    ))
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Json<Vec<ApiSession>> {
    let sessions = app.sessions.read().expect("session map lock");
    Json(sessions.values().map(SessionHandle::summary).collect())
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ApiSession>, ApiError> {
    Ok(Json(app.handle(&id)?.summary()))
}

async fn session_command(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ApiSession>, ApiError> {
    let handle = app.handle(&id)?;
    let req: CommandRequest = parse_body(&body)?;
    Ok(Json(handle.lifecycle(req.command).await?))
}

async fn apply_attack(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<AttackResponse>, ApiError> {
    let handle = app.handle(&id)?;
    let attack: AttackConfig = parse_body(&body)?;
    let (applied, session) = handle.attack(attack).await?;
    Ok(Json(AttackResponse { applied, session }))
}

#[derive(Debug, Deserialize)]
struct TelemetryQuery {
    decimation: Option<String>,
}

fn frames(sub: Arc<Subscriber>) -> impl Stream<Item = Result<Event, Infallible>> {
    stream::unfold(sub, |sub| async move {
        let frame = sub.next().await?;
        let mut event = Event::default()
            .event(frame.kind.event_name())
            .data(frame.data.clone());
        if let Some(seq) = frame.seq {
            event = event.id(seq.to_string());
        }
        Some((Ok(event), sub))
    })
}

async fn telemetry(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<TelemetryQuery>,
) -> Result<Response, ApiError> {
    let handle = app.handle(&id)?;
    let decimation = match q.decimation {
        None => app.config.default_decimation,
        Some(raw) => match raw.parse::<u64>() {
            Ok(n) if n > 0 => n,
            _ => {
                return Err(ApiError::Unprocessable(format!(
                    "decimation must be a positive integer (got {raw:?})"
                )))
            }
        },
    };
    let sub = handle
        .subscribe(decimation, app.config.telemetry_buffer)
        .await?;
    Ok(Sse::new(frames(sub))
        .keep_alive(KeepAlive::default())
        .into_response())
}

#[derive(Debug, Deserialize)]
struct MetricsQuery {
    reference: Option<String>,
}

fn readable(state: SessionState, what: &str) -> Result<(), ApiError> {
    match state {
        SessionState::Running => Err(ApiError::Conflict(format!("{what} is running"))),
        SessionState::Created => Err(ApiError::Conflict(format!("{what} has not run yet"))),
        _ => Ok(()),
    }
}

async fn metrics(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<MetricsQuery>,
) -> Result<Json<MetricsReport>, ApiError> {
    let handle = app.handle(&id)?;
    let reference = match &q.reference {
        Some(r) => Some(app.handle(r)?),
        None => None,
    };
    let snap = handle.log().await?;
    readable(snap.state, "session")?;
    let reference = match reference {
        Some(h) => {
            let r = h.log().await?;
            readable(r.state, "reference session")?;
            Some(r.log)
        }
        None => None,
    };
    let report =
        tokio::task::spawn_blocking(move || compute_metrics(&snap.log, reference.as_ref()))
            .await
            .map_err(|_| ApiError::Unavailable)?;
    match report {
        Ok(r) => Ok(Json(r)),
        Err(e @ MetricsError::ReferenceMismatch(_)) => Err(ApiError::Unprocessable(e.to_string())),
        Err(e @ MetricsError::EmptyLog) => Err(ApiError::Conflict(e.to_string())),
    }
}

#[derive(Debug, Deserialize)]
struct LogQuery {
    format: Option<String>,
}

async fn download_log(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<LogQuery>,
) -> Result<Response, ApiError> {
    let handle = app.handle(&id)?;
    let format: LogFormat = q.format.as_deref().unwrap_or("json").parse().map_err(
        |e: mems_testbed::session::UnknownFormat| ApiError::Unprocessable(e.to_string()),
    )?;
    let snap = handle.log().await?;
    if snap.state == SessionState::Running {
        return Err(ApiError::Conflict("session is running".into()));
    }
    let bytes = tokio::task::spawn_blocking(move || export_log(&snap.log, format))
        .await
        .map_err(|_| ApiError::Unavailable)?;
    let content_type = match format {
        LogFormat::Csv => "text/csv",
        LogFormat::Json => "application/json",
    };
    let disposition = format!(
        "attachment; filename=\"session-{id}.{}\"",
        format.extension()
    );
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        bytes,
    )
        .into_response())
}
