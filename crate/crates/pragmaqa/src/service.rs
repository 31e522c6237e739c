//! HTTP facade: `POST /ask`, `GET /health`, `GET /passages/{id}`.
//!
//! Pipeline work runs on the blocking pool so backend calls never stall the
//! async workers. Error bodies are `{"error": ..., "stage": ...}` where
//! `stage` is present only for backend failures.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::info;
use pragmaqa_core::pipeline::PipelineError;
use serde_json::json;

use crate::runtime::{AskRequest, Runtime, RuntimeError};

#[derive(Debug, Clone)]
pub struct AppState {
    pub runtime: Arc<Runtime>,
    pub timeout: Duration,
}

impl AppState {
    pub fn new(runtime: Arc<Runtime>) -> Self {
        let timeout = Duration::from_millis(runtime.config.service.request_timeout_ms);
        Self { runtime, timeout }
    }
}

fn error(status: StatusCode, message: impl Into<String>, stage: Option<&str>) -> Response {
    let mut body = json!({ "error": message.into() });
    if let Some(s) = stage {
        body["stage"] = json!(s);
    }
    (status, Json(body)).into_response()
}

fn status_for(e: &RuntimeError) -> StatusCode {
    match e {
        RuntimeError::Backend { .. } => StatusCode::SERVICE_UNAVAILABLE,
        RuntimeError::Pipeline(PipelineError::EmptyQuestion)
        | RuntimeError::Pipeline(PipelineError::CorpusExhausted { .. })
        | RuntimeError::Pipeline(PipelineError::InferenceExhausted { .. })
        | RuntimeError::Pipeline(PipelineError::InvalidPromptInput(_))
        | RuntimeError::Inference(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn ask(State(state): State<AppState>, body: Bytes) -> Response {
    let req: AskRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string(), None),
    };
    if req.question.trim().is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "question is empty", None);
    }
    let rt = state.runtime.clone();
    let mode = req.mode;
    let work = tokio::task::spawn_blocking(move || rt.ask(&req));
    match tokio::time::timeout(state.timeout, work).await {
        Err(_) => error(StatusCode::GATEWAY_TIMEOUT, "request timed out", None),
        Ok(Err(join)) => error(StatusCode::INTERNAL_SERVER_ERROR, join.to_string(), None),
        Ok(Ok(Err(e))) => {
            info!("ask {} failed: {e}", mode.as_str());
            error(status_for(&e), e.to_string(), e.stage().map(|s| s.as_str()))
        }
        Ok(Ok(Ok(bundle))) => {
            info!("ask {} k={} ok", mode.as_str(), bundle.k);
            (StatusCode::OK, Json(bundle)).into_response()
        }
    }
}

async fn health(State(state): State<AppState>) -> Response {
    let rt = state.runtime.clone();
    match tokio::task::spawn_blocking(move || rt.health()).await {
        Ok(h) => (StatusCode::OK, Json(h)).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

async fn passage(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    match state.runtime.store.get(&id) {
        Some(p) => (StatusCode::OK, Json(p.clone())).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown passage {id}"), None),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/ask", post(ask))
        .route("/health", get(health))
        .route("/passages/{id}", get(passage))
        .with_state(state)
}

/// Serve until the listener fails or the process receives Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
