//! HTTP and websocket front end for running sessions.
//!
//! Routes:
//!
//! - `GET  /health`
//! - `POST /sessions` with `{"mode", "seed", "scenario" (TOML text), "live": {"initial", "seed"}, "accel"}`; every field optional
//! - `GET  /sessions` (ids)
//! - `GET  /sessions/{id}`, `GET /sessions/{id}/metrics`
//! - `GET  /sessions/{id}/archive` (NDJSON, once closed)
//! - `POST /sessions/{id}/close`
//! - `GET  /sessions/{id}/feed` websocket, protocol in [`neuroadapt::session::wire`]
//!
//! Unknown sessions on the feed are closed with code [`CLOSE_UNKNOWN_SESSION`].

mod queue;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;

use neuroadapt::adapt::{ChatBackend, DirectiveSet};
use neuroadapt::classifier::MlpModel;
use neuroadapt::session::wire::{decode_client, encode};
use neuroadapt::session::{
    ClientMessage, ServerMessage, Session, SessionConfig, SessionError, SessionMode, SessionSource,
};
use neuroadapt::sim::ScenarioScript;
use neuroadapt::AttentionState;

pub use queue::FeedQueue;

pub const CLOSE_UNKNOWN_SESSION: u16 = 4404;
pub const DEFAULT_QUEUE_CAPACITY: usize = 256;

#[derive(Clone)]
pub struct ServiceConfig {
    pub model: Arc<MlpModel>,
    pub directives: Arc<DirectiveSet>,
    pub backend: Arc<dyn ChatBackend>,
    /// Session seconds per wall-clock second.
    pub accel: f64,
    pub queue_capacity: usize,
    pub history_turns: usize,
    pub k: usize,
}

impl ServiceConfig {
    pub fn new(model: Arc<MlpModel>, backend: Arc<dyn ChatBackend>) -> Self {
        let defaults = SessionConfig::default();
        Self {
            model,
            directives: Arc::new(DirectiveSet::builtin()),
            backend,
            accel: 1.0,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            history_turns: defaults.history_turns,
            k: defaults.k,
        }
    }
}

/// A session plus its feed subscribers.
pub struct SessionHandle {
    session: Mutex<Session>,
    subscribers: Mutex<Vec<Arc<FeedQueue>>>,
    accel: f64,
}

impl SessionHandle {
    fn publish(&self, msgs: Vec<ServerMessage>) {
        if msgs.is_empty() {
            return;
        }
        let subs = self.subscribers.lock().expect("subscribers lock");
        for q in subs.iter() {
            for m in &msgs {
                q.push(m.clone());
            }
        }
    }

    fn subscribe(&self, capacity: usize) -> Arc<FeedQueue> {
        let q = Arc::new(FeedQueue::new(capacity));
        let hello = self.session.lock().expect("session lock").hello();
        q.push(hello);
        self.subscribers.lock().expect("subscribers lock").push(q.clone());
        q
    }

    fn unsubscribe(&self, q: &Arc<FeedQueue>) {
        self.subscribers
            .lock()
            .expect("subscribers lock")
            .retain(|s| !Arc::ptr_eq(s, q));
    }

    fn close_feeds(&self) {
        for q in self.subscribers.lock().expect("subscribers lock").drain(..) {
            q.close();
        }
    }

    fn most_backlogged(&self) -> Option<(usize, usize)> {
        self.subscribers
            .lock()
            .expect("subscribers lock")
            .iter()
            .map(|q| (q.len(), q.capacity()))
            .max()
    }

    pub fn with_session<T>(&self, f: impl FnOnce(&mut Session) -> T) -> T {
        f(&mut self.session.lock().expect("session lock"))
    }
}

#[derive(Clone)]
pub struct AppState {
    cfg: ServiceConfig,
    sessions: Arc<Mutex<HashMap<String, Arc<SessionHandle>>>>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        Self {
            cfg,
            sessions: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn session(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.lock().expect("sessions lock").get(id).cloned()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StartRequest {
    pub mode: Option<String>,
    pub seed: Option<u64>,
    /// Scenario script in TOML; the default five-block script when absent.
    pub scenario: Option<String>,
    pub live: Option<LiveRequest>,
    pub accel: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiveRequest {
    pub initial: AttentionState,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartResponse {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub mode: SessionMode,
    pub clock_us: i64,
    pub state: AttentionState,
    pub paused: bool,
    pub closed: bool,
    pub events: usize,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    line: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            line: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(l) = self.line {
            body["line"] = json!(l);
        }
        (self.status, Json(body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(start_session).get(list_sessions))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/metrics", get(session_metrics))
        .route("/sessions/{id}/archive", get(session_archive))
        .route("/sessions/{id}/close", post(close_session))
        .route("/sessions/{id}/feed", get(feed))
        .with_state(state)
}

/// Serves until the listener fails. Checks the backend first.
pub async fn serve(listener: tokio::net::TcpListener, cfg: ServiceConfig) -> std::io::Result<()> {
    let backend = cfg.backend.clone();
    tokio::task::spawn_blocking(move || backend.check_reachable())
        .await
        .expect("reachability probe")
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::ConnectionRefused, e.to_string()))?;
    axum::serve(listener, router(AppState::new(cfg))).await
}

/// Binds `addr` and serves in the background; returns the bound address.
pub async fn spawn(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(AppState::new(cfg));
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("service stopped: {e}");
        }
    });
    Ok((local, task))
}

async fn start_session(
    State(app): State<AppState>,
    body: Option<Json<StartRequest>>,
) -> Result<(StatusCode, Json<StartResponse>), ApiError> {
    let req = body.map(|b| b.0).unwrap_or_default();
    let mode = match &req.mode {
        Some(m) => m
            .parse::<SessionMode>()
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_mode", e))?,
        None => SessionMode::Adaptive,
    };
    let accel = req.accel.unwrap_or(app.cfg.accel);
    if !(accel > 0.0 && accel.is_finite()) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_accel", "accel must be positive"));
    }
    let source = match (&req.live, &req.scenario) {
        (Some(live), _) => SessionSource::Live {
            initial: live.initial,
            seed: live.seed,
            jitter_ms: 2.0,
        },
        (None, Some(text)) => {
            let mut script = ScenarioScript::parse(text).map_err(|e| ApiError {
                status: StatusCode::BAD_REQUEST,
                code: "bad_scenario",
                message: e.to_string(),
                line: Some(e.line),
            })?;
            if let Some(seed) = req.seed {
                script.seed = seed;
            }
            SessionSource::Scripted(script)
        }
        (None, None) => SessionSource::Scripted(ScenarioScript::default_script(req.seed.unwrap_or(0))),
    };
    let backend = app.cfg.backend.clone();
    tokio::task::spawn_blocking(move || backend.check_reachable())
        .await
        .expect("reachability probe")
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable", e.to_string()))?;

    let id = uuid::Uuid::new_v4().to_string();
    let session = Session::new(
        id.clone(),
        SessionConfig {
            mode,
            k: app.cfg.k,
            history_turns: app.cfg.history_turns,
        },
        app.cfg.model.clone(),
        app.cfg.directives.clone(),
        source,
    )
    .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_session", e.to_string()))?;
    let handle = Arc::new(SessionHandle {
        session: Mutex::new(session),
        subscribers: Mutex::new(Vec::new()),
        accel,
    });
    app.sessions
        .lock()
        .expect("sessions lock")
        .insert(id.clone(), handle.clone());
    tokio::spawn(drive(handle));
    Ok((StatusCode::CREATED, Json(StartResponse { session_id: id })))
}

/// Steps the session once per (compressed) second until its source ends.
async fn drive(h: Arc<SessionHandle>) {
    let period = Duration::from_secs_f64(1.0 / h.accel);
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        ticker.tick().await;
        // accelerated runs wait for slow readers instead of dropping
        if h.accel > 1.0 {
            let mut waited = 0;
            while h.most_backlogged().is_some_and(|(len, cap)| len * 2 >= cap) && waited < 1000 {
                tokio::time::sleep(Duration::from_millis(2)).await;
                waited += 1;
            }
        }
        let step = h.with_session(|s| match s.step() {
            Ok(Some(msgs)) => Ok(msgs),
            Ok(None) => Ok(s.close()),
            Err(e) => Err(e),
        });
        match step {
            Ok(msgs) => {
                let ended = msgs.iter().any(|m| matches!(m, ServerMessage::SessionEnd { .. }));
                h.publish(msgs);
                if ended {
                    h.close_feeds();
                    return;
                }
            }
            Err(_) => {
                h.close_feeds();
                return;
            }
        }
    }
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<String>> {
    let mut ids: Vec<String> = app.sessions.lock().expect("sessions lock").keys().cloned().collect();
    ids.sort();
    Json(ids)
}

fn lookup(app: &AppState, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
    app.session(id).ok_or_else(|| ApiError::not_found(id))
}

async fn session_status(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionStatus>, ApiError> {
    let h = lookup(&app, &id)?;
    Ok(Json(h.with_session(|s| SessionStatus {
        session_id: s.id().to_string(),
        mode: s.mode(),
        clock_us: s.clock_us(),
        state: s.current_state(),
        paused: s.is_paused(),
        closed: s.is_closed(),
        events: s.events().len(),
    })))
}

async fn session_metrics(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = lookup(&app, &id)?;
    Ok(Json(h.with_session(|s| s.metrics())).into_response())
}

async fn session_archive(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = lookup(&app, &id)?;
    let bytes = h.with_session(|s| s.archive().map(<[u8]>::to_vec));
    match bytes {
        Some(b) => Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], b).into_response()),
        None => Err(ApiError::new(StatusCode::CONFLICT, "session_open", "session is still running")),
    }
}

async fn close_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let h = lookup(&app, &id)?;
    let msgs = h.with_session(|s| s.close());
    h.publish(msgs);
    h.close_feeds();
    Ok(StatusCode::NO_CONTENT)
}

async fn feed(State(app): State<AppState>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Response {
    let handle = app.session(&id);
    let backend = app.cfg.backend.clone();
    let capacity = app.cfg.queue_capacity;
    ws.on_upgrade(move |socket| async move {
        match handle {
            Some(h) => run_feed(socket, h, backend, capacity).await,
            None => {
                let mut socket = socket;
                let _ = socket
                    .send(Message::Close(Some(CloseFrame {
                        code: CLOSE_UNKNOWN_SESSION,
                        reason: format!("unknown session {id}").into(),
                    })))
                    .await;
            }
        }
    })
}

async fn run_feed(socket: WebSocket, h: Arc<SessionHandle>, backend: Arc<dyn ChatBackend>, capacity: usize) {
    let queue = h.subscribe(capacity);
    let (mut tx, mut rx) = socket.split();
    let out_q = queue.clone();
    let writer = tokio::spawn(async move {
        while let Some(m) = out_q.pop().await {
            if tx.send(Message::Text(encode(&m).into())).await.is_err() {
                return;
            }
        }
        let _ = tx
            .send(Message::Close(Some(CloseFrame {
                code: 1000,
                reason: "session ended".into(),
            })))
            .await;
    });
    while let Some(Ok(msg)) = rx.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match decode_client(&text) {
            Ok(cm) => handle_client(&h, cm, &backend).await,
            Err(e) => Err(("bad_message", e.to_string())),
        };
        if let Err((code, message)) = reply {
            queue.push(ServerMessage::Error {
                code: code.into(),
                message,
            });
        }
    }
    h.unsubscribe(&queue);
    queue.close();
    let _ = writer.await;
}

async fn handle_client(
    h: &Arc<SessionHandle>,
    msg: ClientMessage,
    backend: &Arc<dyn ChatBackend>,
) -> Result<(), (&'static str, String)> {
    let err = |e: SessionError| {
        let code = match e {
            SessionError::Closed => "session_closed",
            SessionError::UnknownProbe(_) => "unknown_probe",
            SessionError::BadRating(_) => "bad_rating",
            SessionError::Prompt(_) => "empty_message",
            _ => "session_error",
        };
        (code, e.to_string())
    };
    match msg {
        ClientMessage::UserMsg { content } => {
            let (req, msgs) = h.with_session(|s| s.begin_chat(&content)).map_err(err)?;
            h.publish(msgs);
            // the backend runs without the session lock; classification continues meanwhile
            let b = backend.clone();
            let r = req.clone();
            let reply = tokio::task::spawn_blocking(move || b.complete(&r))
                .await
                .expect("backend task");
            let msgs = h.with_session(|s| s.finish_chat(&req, reply));
            h.publish(msgs);
        }
        ClientMessage::ProbeResponse { onset_us, rating } => {
            let msgs = h.with_session(|s| s.probe_response(onset_us, rating)).map_err(err)?;
            h.publish(msgs);
        }
        ClientMessage::Steer { state } => {
            let msgs = h.with_session(|s| s.steer(state)).map_err(err)?;
            h.publish(msgs);
        }
        ClientMessage::Pause { paused } => {
            let msgs = h.with_session(|s| s.set_paused(paused)).map_err(err)?;
            h.publish(msgs);
        }
    }
    Ok(())
}
