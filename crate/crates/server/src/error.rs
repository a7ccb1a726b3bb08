use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use molscope_core::analysis::AnalysisError;
use molscope_core::docstore::StoreError;
use serde::Serialize;
use thiserror::Error;

/// Error body `{"code", "message"}` with the HTTP status chosen from the code.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ApiError { code: code.to_string(), message: message.into() }
    }

    pub fn unknown_session(id: &str) -> Self {
        ApiError::new("unknown_session", format!("no session {id:?}"))
    }

    pub fn fingerprints_missing() -> Self {
        ApiError::new("fingerprints_missing", "compute fingerprints for this session first")
    }

    pub fn not_ckpca() -> Self {
        ApiError::new("not_ckpca", "interactions need an active ckpca embedding")
    }

    pub fn invalid_request(message: impl Into<String>) -> Self {
        ApiError::new("invalid_request", message)
    }

    pub fn status(&self) -> StatusCode {
        match self.code.as_str() {
            "unknown_collection" | "unknown_session" | "not_found" => StatusCode::NOT_FOUND,
            "fingerprints_missing" | "not_ckpca" | "no_embedding" => StatusCode::CONFLICT,
            "io_error" | "internal" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<molscope_core::embed::EmbedError> for ApiError {
    fn from(e: molscope_core::embed::EmbedError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}
