//! WebSocket host for collaborative sketch sessions.
//!
//! Routes:
//! - `GET /session/{id}`: WebSocket, one JSON envelope per text frame. The
//!   session is created on first connect.
//! - `GET /session/{id}/snapshot`: canonical document bytes, last applied seq
//!   in the `x-last-seq` header; 404 with `UnknownSession` if absent.
//!
//! Each session is owned by one actor task that handles events one at a
//! time. Generation runs on the blocking pool and re-enters the actor as an
//! event.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use spatialprompt_core::backend::{BackendConfig, TaskState};
use spatialprompt_core::session::{
    run_generation_job, Envelope, GenerationJob, Message, Outbound, Recipient, SessionError, SessionState, SERVER_ID,
};
use spatialprompt_core::validator::ValidatorParams;
use spatialprompt_core::{CompileParams, TriangleMesh, ValidationReport};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub backend: BackendConfig,
    pub validator: ValidatorParams,
    pub compile: CompileParams,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { backend: BackendConfig::mock(), validator: ValidatorParams::default(), compile: CompileParams::default() }
    }
}

type ConnId = u64;
type Snapshot = Result<(Vec<u8>, u64), SessionError>;

enum Event {
    Connect { conn: ConnId, tx: mpsc::UnboundedSender<String> },
    Frame { conn: ConnId, text: String },
    Disconnect { conn: ConnId },
    Snapshot { reply: oneshot::Sender<Snapshot> },
    GenerationDone { request_id: String, outcome: Result<(TriangleMesh, ValidationReport), String> },
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, mpsc::UnboundedSender<Event>>>>,
    config: Arc<ServerConfig>,
    next_conn: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        Self { sessions: Arc::default(), config: Arc::new(config), next_conn: Arc::new(AtomicU64::new(1)) }
    }

    fn session(&self, id: &str) -> mpsc::UnboundedSender<Event> {
        let mut sessions = self.sessions.lock().expect("session map lock");
        sessions
            .entry(id.to_string())
            .or_insert_with(|| {
                let (tx, rx) = mpsc::unbounded_channel();
                tokio::spawn(run_session(id.to_string(), self.config.clone(), tx.clone(), rx));
                tx
            })
            .clone()
    }

    fn existing(&self, id: &str) -> Option<mpsc::UnboundedSender<Event>> {
        self.sessions.lock().expect("session map lock").get(id).cloned()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/session/{id}", get(ws_handler))
        .route("/session/{id}/snapshot", get(snapshot_handler))
        .with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(listener: TcpListener, config: ServerConfig) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(config))).await
}

/// Bind `addr` and serve on a background task; returns the bound address.
pub async fn spawn(addr: SocketAddr, config: ServerConfig) -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener, config).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(local)
}

async fn ws_handler(ws: WebSocketUpgrade, Path(id): Path<String>, State(state): State<AppState>) -> Response {
    let session = state.session(&id);
    let conn = state.next_conn.fetch_add(1, Ordering::Relaxed);
    ws.on_upgrade(move |socket| connection(socket, conn, session))
}

async fn connection(socket: WebSocket, conn: ConnId, session: mpsc::UnboundedSender<Event>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    if session.send(Event::Connect { conn, tx }).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(WsMessage::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            WsMessage::Text(text) => {
                if session.send(Event::Frame { conn, text: text.to_string() }).is_err() {
                    break;
                }
            }
            WsMessage::Close(_) => break,
            _ => {}
        }
    }
    let _ = session.send(Event::Disconnect { conn });
    writer.abort();
}

async fn snapshot_handler(Path(id): Path<String>, State(state): State<AppState>) -> Response {
    let not_found = || {
        let body = serde_json::json!({ "code": "UnknownSession", "message": format!("no session {id:?}") });
        (StatusCode::NOT_FOUND, Json(body)).into_response()
    };
    let Some(session) = state.existing(&id) else { return not_found() };
    let (reply, rx) = oneshot::channel();
    if session.send(Event::Snapshot { reply }).is_err() {
        return not_found();
    }
    match rx.await {
        Ok(Ok((bytes, seq))) => {
            let mut resp = (StatusCode::OK, bytes).into_response();
            resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
            resp.headers_mut().insert("x-last-seq", HeaderValue::from(seq));
            resp
        }
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        Err(_) => not_found(),
    }
}

struct Conn {
    tx: mpsc::UnboundedSender<String>,
    participant: Option<String>,
}

struct Actor {
    state: SessionState,
    conns: HashMap<ConnId, Conn>,
}

impl Actor {
    fn send_to_conn(&self, conn: ConnId, env: &Envelope) {
        if let Some(c) = self.conns.get(&conn) {
            let _ = c.tx.send(env.to_json());
        }
    }

    fn route(&self, from: Option<ConnId>, outbound: Vec<Outbound>) {
        for out in outbound {
            match &out.to {
                Recipient::Sender => {
                    if let Some(conn) = from {
                        self.send_to_conn(conn, &out.envelope);
                    }
                }
                Recipient::Participant(p) => {
                    for c in self.conns.values().filter(|c| c.participant.as_deref() == Some(p)) {
                        let _ = c.tx.send(out.envelope.to_json());
                    }
                }
            }
        }
    }

    fn reject(&self, conn: ConnId, code: &str, message: String) {
        let env = Envelope::new(
            self.state.session_id.clone(),
            SERVER_ID,
            Message::Error { code: code.into(), message },
        );
        self.send_to_conn(conn, &env);
    }

    /// Returns a generation job to start, if any.
    fn frame(&mut self, conn: ConnId, text: &str) -> Option<GenerationJob> {
        let env = match Envelope::from_json(text) {
            Ok(env) => env,
            Err(e) => {
                self.reject(conn, "ProtocolError", e.to_string());
                return None;
            }
        };
        let bound = self.conns.get(&conn)?.participant.clone();
        match (&bound, &env.message) {
            (None, Message::Join { .. }) => {}
            (None, _) => {
                self.reject(conn, "NotAParticipant", "join before sending other messages".into());
                return None;
            }
            (Some(p), _) if *p != env.sender_id => {
                self.reject(conn, "SenderMismatch", format!("this connection belongs to {p:?}"));
                return None;
            }
            _ => {}
        }
        let sender = env.sender_id.clone();
        let fx = self.state.handle(env);
        let welcomed = fx.outbound.iter().any(|o| {
            o.to == Recipient::Participant(sender.clone()) && matches!(o.envelope.message, Message::Welcome { .. })
        });
        if bound.is_none() && welcomed {
            if let Some(c) = self.conns.get_mut(&conn) {
                c.participant = Some(sender);
            }
        }
        self.route(Some(conn), fx.outbound);
        fx.job
    }
}

async fn run_session(
    id: String,
    config: Arc<ServerConfig>,
    me: mpsc::UnboundedSender<Event>,
    mut events: mpsc::UnboundedReceiver<Event>,
) {
    let mut state = SessionState::new(id);
    state.compile_params = config.compile;
    let mut actor = Actor { state, conns: HashMap::new() };
    while let Some(event) = events.recv().await {
        match event {
            Event::Connect { conn, tx } => {
                actor.conns.insert(conn, Conn { tx, participant: None });
            }
            Event::Disconnect { conn } => {
                if let Some(Conn { participant: Some(p), .. }) = actor.conns.remove(&conn) {
                    let fx = actor.state.leave(&p);
                    actor.route(None, fx.outbound);
                }
            }
            Event::Frame { conn, text } => {
                if let Some(job) = actor.frame(conn, &text) {
                    let request_id = job.request.request_id.clone();
                    let running = actor.state.generation_progress(&request_id, TaskState::Running, Some(0));
                    actor.route(None, running);
                    let (config, me) = (config.clone(), me.clone());
                    tokio::spawn(async move {
                        let outcome = tokio::task::spawn_blocking(move || {
                            run_generation_job(&job, &config.backend, &config.validator)
                        })
                        .await
                        .unwrap_or_else(|e| Err(format!("GenerationPanicked: {e}")));
                        let _ = me.send(Event::GenerationDone { request_id, outcome });
                    });
                }
            }
            Event::GenerationDone { request_id, outcome } => {
                let out = actor.state.finish_generation(&request_id, outcome);
                actor.route(None, out);
            }
            Event::Snapshot { reply } => {
                let _ = reply.send(actor.state.snapshot());
            }
        }
    }
}
