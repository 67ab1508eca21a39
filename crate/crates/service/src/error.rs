use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// An HTTP error with a JSON body `{error, field?, retryable?}`.
#[derive(Debug, thiserror::Error)]
#[error("{status}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            field: None,
        }
    }

    pub fn field(status: StatusCode, field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            field: Some(field.into()),
        }
    }

    pub fn not_found(what: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, message)
    }

    pub fn storage(e: impl std::fmt::Display) -> Self {
        ApiError::new(
            StatusCode::INSUFFICIENT_STORAGE,
            format!("persistence failure: {e}"),
        )
    }

    /// Maps an engine error to a response, prefixing field paths with `prefix`.
    pub fn from_core(status: StatusCode, prefix: &str, e: brush_core::Error) -> Self {
        match e.field() {
            Some(f) if prefix.is_empty() => ApiError::field(status, f, e.to_string()),
            Some(f) => ApiError::field(status, format!("{prefix}.{f}"), e.to_string()),
            None => ApiError::new(status, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(f) = self.field {
            body["field"] = json!(f);
        }
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
