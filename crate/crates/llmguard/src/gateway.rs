//! HTTP gateway.
//!
//! | method | path                 | request                                     | response |
//! |--------|----------------------|---------------------------------------------|----------|
//! | POST   | `/v1/guarded-chat`   | `{"prompt", "detectors"?: {id: {"enabled"?, "threshold"?}}}` | `{"request_id", "decision", "blocked_phase", "delivered_text", "reports"}` |
//! | POST   | `/v1/unguarded-chat` | `{"prompt"}`                                | `{"response"}` |
//! | POST   | `/v1/scan`           | `{"text", "phase"}`                         | `{"reports"}` |
//! | GET    | `/v1/policy`         |                                             | the effective policy |
//! | GET    | `/healthz`           |                                             | `ok` |
//!
//! Errors are `{"error": {"code", "message"}}` with codes `bad_request` and
//! `unknown_detector` (400), `overrides_disabled` (403), `not_found` (404),
//! `payload_too_large` (413) and `upstream_error` (502).

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use llmguard_core::{
    guard_exchange, guard_text, DetectorOverride, DetectorReport, Exchange, GuardError, Phase, Policy, PolicyError,
    Registry, Upstream, Verdict,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::config::GatewayOptions;

/// Immutable state shared by all requests.
pub struct GatewayState {
    registry: Registry,
    policy: Policy,
    options: GatewayOptions,
    upstream: Arc<dyn Upstream>,
    next_id: AtomicU64,
}

impl GatewayState {
    pub fn new(registry: Registry, policy: Policy, options: GatewayOptions, upstream: Arc<dyn Upstream>) -> Self {
        GatewayState { registry, policy, options, upstream, next_id: AtomicU64::new(1) }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardedChatRequest {
    pub prompt: String,
    #[serde(default)]
    pub detectors: BTreeMap<String, DetectorOverride>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GuardedChatResponse {
    pub request_id: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnguardedChatRequest {
    pub prompt: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnguardedChatResponse {
    pub response: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRequest {
    pub text: String,
    pub phase: Phase,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScanResponse {
    pub reports: Vec<DetectorReport>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<GuardError> for ApiError {
    fn from(err: GuardError) -> Self {
        match err {
            GuardError::Upstream(e) => ApiError::new(StatusCode::BAD_GATEWAY, "upstream_error", e.message),
            GuardError::Policy(e) => policy_error(e),
        }
    }
}

fn policy_error(err: PolicyError) -> ApiError {
    match err {
        PolicyError::UnknownDetector(_) => ApiError::new(StatusCode::BAD_REQUEST, "unknown_detector", err.to_string()),
        other => ApiError::bad_request(other.to_string()),
    }
}

/// Decodes a JSON body, mapping an over-long body to 413 and anything else to 400.
fn decode<T: DeserializeOwned>(body: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    let bytes = body.map_err(|rejection| {
        if rejection.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", rejection.body_text())
        } else {
            ApiError::bad_request(rejection.body_text())
        }
    })?;
    serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

pub fn router(state: Arc<GatewayState>) -> Router {
    let limit = state.options.max_body_bytes;
    Router::new()
        .route("/v1/guarded-chat", post(guarded_chat))
        .route("/v1/unguarded-chat", post(unguarded_chat))
        .route("/v1/scan", post(scan))
        .route("/v1/policy", get(policy))
        .route("/healthz", get(|| async { "ok" }))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn guarded_chat(
    State(state): State<Arc<GatewayState>>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<GuardedChatResponse>, ApiError> {
    let req: GuardedChatRequest = decode(body)?;
    let policy = if req.detectors.is_empty() {
        state.policy.clone()
    } else if !state.options.allow_request_overrides {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "overrides_disabled", "per-request detector toggles are disabled"));
    } else {
        state.policy.apply_overrides(&req.detectors).map_err(policy_error)?
    };
    let request_id = format!("req-{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let id = request_id.clone();
    let verdict = tokio::task::spawn_blocking(move || {
        let mut exchange = Exchange::new(id, req.prompt);
        guard_exchange(&state.registry, &policy, &mut exchange, state.upstream.as_ref())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    tracing::debug!(%request_id, decision = ?verdict.decision, "guarded chat");
    Ok(Json(GuardedChatResponse { request_id, verdict }))
}

async fn unguarded_chat(
    State(state): State<Arc<GatewayState>>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<UnguardedChatResponse>, ApiError> {
    if !state.options.unguarded_chat {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", "unguarded chat is disabled"));
    }
    let req: UnguardedChatRequest = decode(body)?;
    let response = tokio::task::spawn_blocking(move || state.upstream.complete(&req.prompt))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(GuardError::from)?;
    Ok(Json(UnguardedChatResponse { response }))
}

async fn scan(
    State(state): State<Arc<GatewayState>>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<ScanResponse>, ApiError> {
    let req: ScanRequest = decode(body)?;
    let reports = tokio::task::spawn_blocking(move || guard_text(&state.registry, &state.policy, &req.text, req.phase))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(ScanResponse { reports }))
}

async fn policy(State(state): State<Arc<GatewayState>>) -> Json<Policy> {
    Json(state.policy.clone())
}

/// Serves on an already-bound listener until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<GatewayState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and returns the listener with its resolved local address.
pub async fn bind(addr: &str) -> std::io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}
