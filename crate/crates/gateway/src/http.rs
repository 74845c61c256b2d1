//! Read-mostly HTTP gateway over a weave.
//!
//! | route              | response                                              |
//! |--------------------|-------------------------------------------------------|
//! | `GET /tx/{id}`     | data bytes, `Content-Type` from the transaction tags  |
//! | `GET /tx/{id}/json`| the transaction as JSON                               |
//! | `GET /{id}`        | same as `/tx/{id}`                                    |
//! | `GET /name/{name}` | 302 to `/{target}` with a JSON body naming the target |
//! | `GET /did/{ref}`   | resolved DID document (`ref` is a DID or a name)      |
//! | `GET /weave/stats` | weave statistics                                      |
//! | `POST /tx`         | submit a signed transaction (only with `allow_post`)  |
//!
//! GET handlers only take read locks on the store.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use permadid::did::{DidError, DidRegistry, TAG_CONTENT_TYPE};
use permadid::names::NameError;
use permadid::weave::{Transaction, TxId, WeaveError, WeaveStore};
use serde_json::json;
use thiserror::Error;

#[derive(Clone)]
struct AppState {
    dids: Arc<DidRegistry>,
}

impl AppState {
    fn weave(&self) -> &WeaveStore {
        self.dids.weave()
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

impl From<DidError> for ApiError {
    fn from(e: DidError) -> Self {
        match e {
            DidError::Deactivated(_) => ApiError::new(StatusCode::GONE, "Deactivated", e.to_string()),
            DidError::InvalidDid(_) => ApiError::new(StatusCode::BAD_REQUEST, "InvalidDid", e.to_string()),
            other => ApiError::not_found(other.to_string()),
        }
    }
}

/// Builds the router. `allow_post` enables `POST /tx`.
pub fn router(weave: Arc<WeaveStore>, allow_post: bool) -> Router {
    let state = AppState {
        dids: Arc::new(DidRegistry::new(weave)),
    };
    let mut app = Router::new()
        .route("/tx/{id}", get(tx_data))
        .route("/tx/{id}/json", get(tx_json))
        .route("/name/{name}", get(name))
        .route("/did/{reference}", get(did))
        .route("/weave/stats", get(stats))
        .route("/{id}", get(tx_data));
    if allow_post {
        app = app.route("/tx", post(submit));
    }
    app.fallback(|| async { ApiError::not_found("no such route") }).with_state(state)
}

fn lookup(weave: &WeaveStore, id: &str) -> Result<Transaction, ApiError> {
    let id = TxId::parse(id).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidId", e.to_string()))?;
    weave
        .get(&id)
        .map_err(|_| ApiError::not_found(format!("transaction {id} not found")))
}

async fn tx_data(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let tx = lookup(st.weave(), &id)?;
    let content_type = tx
        .tag(TAG_CONTENT_TYPE)
        .and_then(|v| HeaderValue::from_str(v).ok())
        .unwrap_or(HeaderValue::from_static("application/octet-stream"));
    Ok(([(header::CONTENT_TYPE, content_type)], tx.data).into_response())
}

async fn tx_json(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let tx = lookup(st.weave(), &id)?;
    let sealed = st.weave().is_sealed(&tx.id);
    let mut body = serde_json::to_value(&tx).expect("transactions serialize");
    body["sealed"] = sealed.into();
    Ok(Json(body).into_response())
}

async fn name(State(st): State<AppState>, Path(name): Path<String>) -> Result<Response, ApiError> {
    let (target, record) = st.dids.names().resolve(&name).map_err(|e| match e {
        NameError::InvalidName(_) => ApiError::new(StatusCode::BAD_REQUEST, "InvalidName", e.to_string()),
        other => ApiError::not_found(other.to_string()),
    })?;
    let location = HeaderValue::from_str(&format!("/{target}")).expect("ids are header-safe");
    let body = json!({
        "name": name,
        "target": target,
        "owner": record.owner_address,
        "sequence": record.sequence,
        "recordTx": record.record_tx,
    });
    Ok((StatusCode::FOUND, [(header::LOCATION, location)], Json(body)).into_response())
}

async fn did(State(st): State<AppState>, Path(reference): Path<String>) -> Result<Response, ApiError> {
    let res = st.dids.resolve_with_tx(&reference)?;
    Ok(Json(json!({"didDocument": res.document, "metadata": {"tx": res.tx}})).into_response())
}

async fn stats(State(st): State<AppState>) -> Json<permadid::weave::WeaveStats> {
    Json(st.weave().stats())
}

async fn submit(State(st): State<AppState>, body: axum::body::Bytes) -> Result<Response, ApiError> {
    let tx: Transaction = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "Malformed", e.to_string()))?;
    let id = st.weave().submit_transaction(tx).map_err(|e| {
        let code = match e {
            WeaveError::OversizeData { .. } => "OversizeData",
            WeaveError::BadSignature => "BadSignature",
            WeaveError::IdMismatch => "IdMismatch",
            _ => "Rejected",
        };
        ApiError::new(StatusCode::BAD_REQUEST, code, e.to_string())
    })?;
    Ok((StatusCode::ACCEPTED, Json(json!({"id": id}))).into_response())
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, weave: Arc<WeaveStore>, allow_post: bool) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::BindFailure { addr, source })?;
    axum::serve(listener, router(weave, allow_post))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
