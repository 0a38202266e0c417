//! HTTP/1.1 JSON surface: `/mcp/call`, `/mcp-server/mcp`, `/mcp/trace`,
//! `/mcp/reset`. Bodies are parsed by hand so malformed JSON gets the same
//! error envelope as every other failure.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use stepwise_tools::json::canonical_string;
use stepwise_tools::{ToolError, ToolRegistry};

use crate::store::{ContextStore, StoreError};
use crate::wire::{
    CallRequest, ErrorBody, ErrorResponse, QueryRequest, ResetRequest, TraceRequest,
};

pub struct AppState {
    pub store: ContextStore,
    pub registry: ToolRegistry,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub journal_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8765)),
            journal_dir: None,
            manifest: None,
        }
    }
}

impl ServerConfig {
    /// Reads `STEPWISE_LISTEN`, `STEPWISE_JOURNAL_DIR` and
    /// `STEPWISE_TOOL_MANIFEST`, falling back to defaults.
    pub fn from_env() -> Result<Self, String> {
        let mut c = ServerConfig::default();
        if let Ok(v) = std::env::var("STEPWISE_LISTEN") {
            c.listen = v.parse().map_err(|e| format!("STEPWISE_LISTEN={v:?}: {e}"))?;
        }
        c.journal_dir = std::env::var_os("STEPWISE_JOURNAL_DIR").map(PathBuf::from);
        c.manifest = std::env::var_os("STEPWISE_TOOL_MANIFEST").map(PathBuf::from);
        Ok(c)
    }

    pub fn build_state(&self) -> Result<AppState, String> {
        let registry = match &self.manifest {
            Some(p) => ToolRegistry::from_manifest(p).map_err(|e| e.to_string())?,
            None => ToolRegistry::standard(),
        };
        let store = match &self.journal_dir {
            Some(d) => ContextStore::open(d).map_err(|e| e.to_string())?,
            None => ContextStore::in_memory(),
        };
        Ok(AppState { store, registry })
    }
}

fn json_response(status: StatusCode, body: &impl Serialize) -> Response {
    let v = serde_json::to_value(body).expect("response serializes");
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        canonical_string(&v),
    )
        .into_response()
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    json_response(
        status,
        &ErrorResponse {
            ok: false,
            error: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        },
    )
}

fn store_error(e: StoreError) -> Response {
    match e {
        StoreError::Conflict { .. } => error(StatusCode::CONFLICT, "CONFLICT", e.to_string()),
        StoreError::Tool(ToolError::UnknownTool(_)) => {
            error(StatusCode::NOT_FOUND, "UNKNOWN_TOOL", e.to_string())
        }
        StoreError::Tool(_) => error(StatusCode::BAD_REQUEST, "INVALID_INPUT", e.to_string()),
        _ => error(StatusCode::INTERNAL_SERVER_ERROR, "STORE_ERROR", e.to_string()),
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body)
        .map_err(|e| error(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.to_string()))
}

async fn call(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: CallRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let st = state.clone();
    let out = tokio::task::spawn_blocking(move || st.store.call(&st.registry, &req)).await;
    match out {
        Ok(Ok(resp)) => json_response(StatusCode::OK, &resp),
        Ok(Err(e)) => store_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "PANIC", e.to_string()),
    }
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    match parse_body::<QueryRequest>(&body) {
        Ok(req) => json_response(StatusCode::OK, &state.store.query(&req)),
        Err(resp) => resp,
    }
}

async fn trace(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    match parse_body::<TraceRequest>(&body) {
        Ok(req) => {
            let t = state.store.trace(&req.run_id, &req.problem_id);
            json_response(StatusCode::OK, &json!({"ok": true, "trace": t}))
        }
        Err(resp) => resp,
    }
}

async fn reset(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: ResetRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    match state.store.reset(&req.run_id, req.problem_id.as_deref()) {
        Ok(()) => json_response(StatusCode::OK, &json!({"ok": true})),
        Err(e) => store_error(e),
    }
}

async fn tools(State(state): State<Arc<AppState>>) -> Response {
    json_response(
        StatusCode::OK,
        &json!({"ok": true, "tools": state.registry.descriptors()}),
    )
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/mcp/call", post(call))
        .route("/mcp-server/mcp", post(query))
        .route("/mcp/trace", post(trace))
        .route("/mcp/reset", post(reset))
        .route("/mcp/tools", axum::routing::get(tools))
        .with_state(state)
}

/// Binds and serves until the future is dropped or ctrl-c arrives.
pub async fn serve(config: &ServerConfig) -> Result<(), String> {
    let state = Arc::new(config.build_state()?);
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|e| format!("cannot listen on {}: {e}", config.listen))?;
    serve_on(listener, state).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, state: Arc<AppState>) -> Result<(), String> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
