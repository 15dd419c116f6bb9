use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use crate::auth::AuthError;
use crate::constellation::GroupError;
use crate::store::{ApplyError, StoreError};

/// An error as sent to clients:
/// `{"error": {"code": "GroupFull", "message": "..."}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub fn model_unavailable() -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "ModelUnavailable",
            "no chatbot model is loaded",
        )
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        let (status, code) = match e {
            AuthError::InvalidEmail => (StatusCode::BAD_REQUEST, "InvalidEmail"),
            AuthError::WeakPassword => (StatusCode::BAD_REQUEST, "WeakPassword"),
            AuthError::InvalidName => (StatusCode::BAD_REQUEST, "InvalidName"),
            AuthError::EmailTaken => (StatusCode::CONFLICT, "EmailTaken"),
            AuthError::AuthFailed => (StatusCode::UNAUTHORIZED, "AuthFailed"),
            AuthError::Unauthorized => (StatusCode::UNAUTHORIZED, "Unauthorized"),
            AuthError::Hash(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<GroupError> for ApiError {
    fn from(e: GroupError) -> Self {
        let status = match e {
            GroupError::InvalidName | GroupError::EmptyBody => StatusCode::BAD_REQUEST,
            GroupError::BodyTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            GroupError::GroupNotFound => StatusCode::NOT_FOUND,
            GroupError::NotAMember => StatusCode::FORBIDDEN,
            GroupError::AlreadyMember
            | GroupError::GroupFull
            | GroupError::DuplicateGroupId(_)
            | GroupError::OutOfOrder { .. } => StatusCode::CONFLICT,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(what) => ApiError::not_found(format!("{what} not found")),
            StoreError::Rejected(ApplyError::Group(g)) => g.into(),
            StoreError::Rejected(ApplyError::DuplicateUser(_)) => AuthError::EmailTaken.into(),
            StoreError::Rejected(other) => ApiError::new(StatusCode::CONFLICT, "Conflict", other.to_string()),
            other => {
                tracing::error!(error = %other, "store failure");
                ApiError::internal("storage failure")
            }
        }
    }
}
