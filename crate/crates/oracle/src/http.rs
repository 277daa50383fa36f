//! JSON endpoints consumed by the labelling client.

use std::path::PathBuf;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::AnswerError;
use crate::service::{OracleService, QueryView, StatusView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueriesResponse {
    pub queries: Vec<QueryView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub query_id: String,
    pub label: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

/// `/api/queries`, `/api/answers` and `/api/status`, plus static files from
/// `static_dir` for every other path when given.
pub fn router(service: OracleService, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/queries", get(queries))
        .route("/api/answers", post(answers))
        .route("/api/status", get(status))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn queries(State(service): State<OracleService>) -> Json<QueriesResponse> {
    Json(QueriesResponse {
        queries: service.queries(),
    })
}

async fn status(State(service): State<OracleService>) -> Json<StatusView> {
    Json(service.status())
}

async fn answers(State(service): State<OracleService>, Json(req): Json<AnswerRequest>) -> Response {
    let refused = |code: StatusCode, reason: String| {
        (
            code,
            Json(AnswerResponse {
                accepted: false,
                reason: Some(reason),
            }),
        )
            .into_response()
    };
    match service.answer(&req.query_id, req.label) {
        Ok(Ok(())) => Json(AnswerResponse {
            accepted: true,
            reason: None,
        })
        .into_response(),
        Ok(Err(e @ AnswerError::Duplicate(_))) => refused(StatusCode::CONFLICT, e.to_string()),
        Ok(Err(e)) => refused(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => refused(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}
