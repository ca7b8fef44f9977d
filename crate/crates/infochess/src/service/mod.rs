//! Play server: a human plays one side of a game against a server-side
//! agent, over REST or a WebSocket.
//!
//! Routes:
//! - `POST /sessions` creates a session from a [`CreateSession`] body.
//! - `GET /sessions/{id}/state`, `GET /sessions/{id}/legal-moves` and
//!   `GET /sessions/{id}/record` return one frame.
//! - `POST /sessions/{id}/move` and `POST /sessions/{id}/inference` return
//!   an array of frames.
//! - `GET /sessions/{id}/ws` upgrades to a WebSocket. Each text frame from
//!   the client is a [`ClientMessage`]; the server answers with one text
//!   frame per [`ServerMessage`].
//!
//! The human sees only their own fogged view until the game is over.

pub mod session;
pub mod wire;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use infochess_core::GameConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agents::AgentFactory;
pub use session::{Clock, ManualClock, ServiceError, SessionManager, SystemClock};
pub use wire::{ClientMessage, CreateSession, ErrorCode, Frame, ServerMessage, SubmitInference, SubmitMove, TeamChoice, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub addr: String,
    /// Withhold per-turn scores until the game ends.
    pub blind: bool,
    pub idle_timeout_secs: u64,
    pub game: GameConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { addr: "127.0.0.1:8080".into(), blind: false, idle_timeout_secs: 30 * 60, game: GameConfig::default() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Shared = Arc<SessionManager>;

/// The HTTP and WebSocket routes over a session manager.
pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/legal-moves", get(get_legal_moves))
        .route("/sessions/{id}/record", get(get_record))
        .route("/sessions/{id}/move", post(post_move))
        .route("/sessions/{id}/inference", post(post_inference))
        .route("/sessions/{id}/ws", get(websocket))
        .with_state(manager)
}

/// Binds `config.addr` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig, factory: AgentFactory) -> Result<(), ServeError> {
    let manager = Arc::new(SessionManager::new(config.clone(), factory, Arc::new(SystemClock::default())));
    let sweeper = manager.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.sweep();
        }
    });
    let listener = tokio::net::TcpListener::bind(&config.addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(manager)).await?;
    Ok(())
}

fn frame(message: ServerMessage) -> Frame<ServerMessage> {
    Frame::new(message)
}

fn error_response(e: ServiceError) -> Response {
    let status = StatusCode::from_u16(e.code.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(frame(e.to_message()))).into_response()
}

fn one(result: Result<ServerMessage, ServiceError>) -> Response {
    match result {
        Ok(m) => Json(frame(m)).into_response(),
        Err(e) => error_response(e),
    }
}

fn many(status: StatusCode, result: Result<Vec<ServerMessage>, ServiceError>) -> Response {
    match result {
        Ok(ms) => (status, Json(ms.into_iter().map(frame).collect::<Vec<_>>())).into_response(),
        Err(e) => error_response(e),
    }
}

/// Parses a request body, rejecting other protocol versions.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| ServiceError::new(ErrorCode::BadRequest, format!("malformed JSON: {e}")))?;
    if let Some(v) = value.get("protocol_version") {
        if v.as_u64() != Some(PROTOCOL_VERSION as u64) {
            return Err(ServiceError::new(ErrorCode::BadRequest, format!("unsupported protocol_version {v}")));
        }
    }
    serde_json::from_value(value).map_err(|e| ServiceError::new(ErrorCode::BadRequest, e.to_string()))
}

/// Runs session logic off the async executor, since agents may run a model.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| Err(ServiceError::new(ErrorCode::Internal, format!("worker failed: {e}"))))
}

async fn create_session(State(m): State<Shared>, body: Bytes) -> Response {
    let result = match parse_body::<CreateSession>(&body) {
        Ok(req) => blocking(move || m.create(&req).map(|(_, msgs)| msgs)).await,
        Err(e) => Err(e),
    };
    many(StatusCode::CREATED, result)
}

async fn get_state(State(m): State<Shared>, Path(id): Path<String>) -> Response {
    one(blocking(move || m.state(&id)).await)
}

async fn get_legal_moves(State(m): State<Shared>, Path(id): Path<String>) -> Response {
    one(blocking(move || m.legal_moves(&id)).await)
}

async fn get_record(State(m): State<Shared>, Path(id): Path<String>) -> Response {
    one(blocking(move || m.record(&id)).await)
}

async fn post_move(State(m): State<Shared>, Path(id): Path<String>, body: Bytes) -> Response {
    let result = match parse_body::<SubmitMove>(&body) {
        Ok(req) => blocking(move || m.submit_move(&id, &req)).await,
        Err(e) => Err(e),
    };
    many(StatusCode::OK, result)
}

async fn post_inference(State(m): State<Shared>, Path(id): Path<String>, body: Bytes) -> Response {
    let result = match parse_body::<SubmitInference>(&body) {
        Ok(req) => blocking(move || m.submit_inference(&id, &req)).await,
        Err(e) => Err(e),
    };
    many(StatusCode::OK, result)
}

/// Answers one client frame.
pub fn handle_client_message(m: &SessionManager, id: &str, text: &str) -> Vec<ServerMessage> {
    let reply = parse_body::<ClientMessage>(text.as_bytes()).and_then(|msg| match msg {
        ClientMessage::GetState => m.state(id).map(|s| vec![s]),
        ClientMessage::GetLegalMoves => m.legal_moves(id).map(|s| vec![s]),
        ClientMessage::GetRecord => m.record(id).map(|s| vec![s]),
        ClientMessage::SubmitMove(req) => m.submit_move(id, &req),
        ClientMessage::SubmitInference(req) => m.submit_inference(id, &req),
    });
    reply.unwrap_or_else(|e| vec![e.to_message()])
}

async fn websocket(State(m): State<Shared>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| run_socket(socket, m, id))
}

async fn run_socket(mut socket: WebSocket, m: Shared, id: String) {
    let greeting = {
        let (m, id) = (m.clone(), id.clone());
        blocking(move || m.state(&id)).await
    };
    let greeting = greeting.unwrap_or_else(|e| e.to_message());
    if send(&mut socket, greeting).await.is_err() {
        return;
    }
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let (m, id) = (m.clone(), id.clone());
        let replies = tokio::task::spawn_blocking(move || handle_client_message(&m, &id, &text))
            .await
            .unwrap_or_else(|e| vec![ServerMessage::error(ErrorCode::Internal, e.to_string())]);
        for reply in replies {
            if send(&mut socket, reply).await.is_err() {
                return;
            }
        }
    }
}

async fn send(socket: &mut WebSocket, message: ServerMessage) -> Result<(), axum::Error> {
    let text = serde_json::to_string(&frame(message)).expect("server frames serialize");
    socket.send(Message::Text(text.into())).await
}
