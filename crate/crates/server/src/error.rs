//! Mapping of domain errors to HTTP responses.
//!
//! Every error body has the shape
//! `{"error": code, "message": text, "violations": [...]}`, plus `line` for
//! import errors. Each core error variant maps to exactly one status.

use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use scriptorium_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

/// Seconds a client should wait after a 503.
pub const RETRY_AFTER_SECS: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    #[serde(rename = "error")]
    pub code: String,
    pub message: String,
    pub violations: Vec<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.to_string(), message: message.into(), violations: Vec::new(), line: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }
}

/// The HTTP status of every core error.
pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::Unauthenticated | Error::InvalidCredentials => StatusCode::UNAUTHORIZED,
        Error::PermissionDenied | Error::NotAuthorized | Error::NotAssignee => StatusCode::FORBIDDEN,
        Error::NotFound { .. } | Error::InvalidToken => StatusCode::NOT_FOUND,
        Error::IllegalTransition { .. }
        | Error::CampaignClosed
        | Error::AlreadyTasked(_)
        | Error::EmailTaken
        | Error::DuplicateElement(_)
        | Error::DuplicateOrder { .. } => StatusCode::CONFLICT,
        Error::Validation(_)
        | Error::Geometry(_)
        | Error::UnknownParent(_)
        | Error::Cycle(_)
        | Error::Config(_)
        | Error::Payload(_)
        | Error::Partition(_)
        | Error::EmptyComment
        | Error::Region(_)
        | Error::Manifest(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Import { source, .. } => status_of(source),
        Error::StorageUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
    }
}

fn violations_of(e: &Error) -> Vec<Value> {
    match e {
        Error::Payload(p) => p.violations.iter().map(|v| json!(v)).collect(),
        Error::Config(c) => vec![json!({"code": c.rule, "path": "config", "message": c.message})],
        Error::Partition(p) => vec![json!({"code": "unknown_member", "path": "groups", "message": p.to_string()})],
        Error::Import { source, .. } => violations_of(source),
        _ => Vec::new(),
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = status_of(&e);
        let message = match &e {
            // Storage details stay in the server log.
            Error::StorageUnavailable(detail) => {
                tracing::error!("storage unavailable: {detail}");
                "storage temporarily unavailable".to_string()
            }
            other => other.to_string(),
        };
        Self {
            status,
            code: e.code().to_string(),
            message,
            violations: violations_of(&e),
            line: match &e {
                Error::Import { line, .. } => Some(*line),
                _ => None,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status;
        let mut response = (status, axum::Json(&self)).into_response();
        if status == StatusCode::SERVICE_UNAVAILABLE {
            response
                .headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(RETRY_AFTER_SECS));
        }
        response
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
