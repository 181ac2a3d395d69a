//! HTTP and WebSocket control API used by the facilitator console.
//!
//! - `GET /session`: roster, script position, overrides and per-client
//!   network counters.
//! - `GET /registry`: the hyperparameter registry.
//! - `POST /command`: a `FacilitatorCommand` body; needs
//!   `Authorization: Bearer <token>`.
//! - `GET /events`: WebSocket stream of session events, one JSON text
//!   message per event.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use copresence_core::protocol::FacilitatorCommand;
use copresence_core::states::ParamRegistry;
use rand::Rng;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;

use crate::server::{Input, ServerError};

#[derive(Clone)]
pub(crate) struct ControlState {
    pub inputs: mpsc::Sender<Input>,
    pub events: broadcast::Sender<Arc<str>>,
    pub token: Arc<str>,
    pub registry: Arc<ParamRegistry>,
}

pub fn generate_token() -> String {
    let bytes: [u8; 16] = rand::rng().random();
    hex::encode(bytes)
}

pub(crate) async fn serve(bind: SocketAddr, state: ControlState) -> Result<(SocketAddr, JoinHandle<()>), ServerError> {
    let listener = TcpListener::bind(bind).await.map_err(|source| ServerError::Bind { addr: bind, source })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind { addr: bind, source })?;
    let app = Router::new()
        .route("/session", get(session))
        .route("/registry", get(registry))
        .route("/command", post(command))
        .route("/events", get(events))
        .with_state(state);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!(error = %e, "control API stopped");
        }
    });
    Ok((addr, handle))
}

fn unavailable() -> Response {
    (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"ok": false, "error": "session stopped"}))).into_response()
}

async fn session(State(st): State<ControlState>) -> Response {
    let (reply, rx) = oneshot::channel();
    if st.inputs.send(Input::Summary { reply }).await.is_err() {
        return unavailable();
    }
    match rx.await {
        Ok(v) => Json(v).into_response(),
        Err(_) => unavailable(),
    }
}

async fn registry(State(st): State<ControlState>) -> Json<serde_json::Value> {
    let params: Vec<_> = st.registry.defs().collect();
    Json(json!({ "params": params }))
}

async fn command(State(st): State<ControlState>, headers: HeaderMap, body: Json<FacilitatorCommand>) -> Response {
    let authorized = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == &*st.token);
    if !authorized {
        return (StatusCode::UNAUTHORIZED, Json(json!({"ok": false, "error": "missing or wrong bearer token"})))
            .into_response();
    }
    let (reply, rx) = oneshot::channel();
    if st.inputs.send(Input::Console { command: body.0, reply }).await.is_err() {
        return unavailable();
    }
    match rx.await {
        Ok(Ok(())) => Json(json!({"ok": true})).into_response(),
        Ok(Err(e)) => (StatusCode::CONFLICT, Json(json!({"ok": false, "error": e}))).into_response(),
        Err(_) => unavailable(),
    }
}

async fn events(State(st): State<ControlState>, ws: WebSocketUpgrade) -> Response {
    let rx = st.events.subscribe();
    ws.on_upgrade(move |socket| forward(socket, rx))
}

async fn forward(mut socket: WebSocket, mut rx: broadcast::Receiver<Arc<str>>) {
    loop {
        match rx.recv().await {
            Ok(line) => {
                if socket.send(WsMessage::Text(line.as_ref().into())).await.is_err() {
                    return;
                }
            }
            Err(broadcast::error::RecvError::Lagged(n)) => {
                let note = json!({"type": "lagged", "missed": n}).to_string();
                if socket.send(WsMessage::Text(note.into())).await.is_err() {
                    return;
                }
            }
            Err(broadcast::error::RecvError::Closed) => {
                let _ = socket.send(WsMessage::Close(None)).await;
                return;
            }
        }
    }
}
