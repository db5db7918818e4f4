//! Local HTTP API.
//!
//! | method | path | body | response |
//! |--------|------|------|----------|
//! | POST | `/sessions` | [`SessionConfig`] | 201, [`SessionReport`] |
//! | GET | `/sessions` | | `{"sessions": [id, ...]}` |
//! | GET | `/sessions/{id}` | | [`SessionReport`] |
//! | POST | `/sessions/{id}/draw` | optional `{"count": n}` | [`DrawResponse`] |
//! | POST | `/sessions/{id}/interpretations` | [`Interpretations`] | [`SessionReport`] |
//! | POST | `/sessions/{id}/escalate` | | [`SessionReport`] |
//!
//! Errors are `{"error": code, "message": text}` with a 4xx or 5xx status.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::session::{Interpretations, PendingDraw, SessionConfig, SessionReport, SCHEMA_VERSION};
use crate::store::SessionStore;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DrawRequest {
    #[serde(default)]
    pub count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub pending: Vec<PendingDraw>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use ServiceError as E;
        let status = match &self.0 {
            E::InvalidConfig(_) | E::InvalidRequest(_) | E::OutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            E::Engine(rla_core::Error::InvalidConfig(_) | rla_core::Error::OutOfRange { .. }) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            E::NotFound(_) => StatusCode::NOT_FOUND,
            E::AlreadyExists(_)
            | E::SessionClosed(_)
            | E::Exhausted
            | E::StaleSequence { .. }
            | E::OutOfOrder { .. } => StatusCode::CONFLICT,
            E::Corrupt(_) | E::Engine(_) | E::Io(_) | E::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = ErrorBody { error: self.0.code().to_string(), message: self.0.to_string() };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::InvalidRequest(e.to_string()).into())
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/draw", post(draw))
        .route("/sessions/{id}/interpretations", post(record))
        .route("/sessions/{id}/escalate", post(escalate))
        .with_state(store)
}

async fn create_session(
    State(store): State<Arc<SessionStore>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SessionReport>)> {
    let config: SessionConfig = parse(&body)?;
    Ok((StatusCode::CREATED, Json(store.create(config)?)))
}

async fn list_sessions(State(store): State<Arc<SessionStore>>) -> ApiResult<Json<serde_json::Value>> {
    Ok(Json(serde_json::json!({ "sessions": store.list()? })))
}

async fn get_session(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<Json<SessionReport>> {
    Ok(Json(store.status(&id)?))
}

async fn draw(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<DrawResponse>> {
    let req: DrawRequest =
        if body.iter().all(u8::is_ascii_whitespace) { DrawRequest::default() } else { parse(&body)? };
    let pending = store.draw(&id, req.count.unwrap_or(1))?;
    Ok(Json(DrawResponse { schema_version: SCHEMA_VERSION, session_id: id, pending }))
}

async fn record(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionReport>> {
    let batch: Interpretations = parse(&body)?;
    Ok(Json(store.record(&id, &batch)?))
}

async fn escalate(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<Json<SessionReport>> {
    Ok(Json(store.escalate(&id)?))
}
