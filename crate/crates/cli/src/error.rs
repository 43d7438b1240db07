use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};
use webdialog_core::bizdb::BizDbError;
use webdialog_core::conf::ConfError;
use webdialog_core::TemplateError;

/// An HTTP error with a JSON body `{"error": message, ...details}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "authentication required")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    /// Logs the cause and answers with a message that reveals nothing about it.
    pub fn internal(cause: impl std::fmt::Display) -> Self {
        tracing::error!(%cause, "request failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let (Some(Value::Object(extra)), Value::Object(map)) = (self.details, &mut body) {
            map.extend(extra);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<ConfError> for ApiError {
    fn from(e: ConfError) -> Self {
        use ConfError::*;
        match e {
            PermissionDenied(_) => Self::forbidden(e.to_string()),
            UnknownUser(_) | UnknownRole(_) | UnknownDialog(_) | UnknownObject { .. }
            | UnknownProperty { .. } => Self::not_found(e.to_string()),
            LanguageRule(_) | InvalidValue { .. } | Invalid { .. } => Self::bad_request(e.to_string()),
            DuplicateUser(_) | DuplicateRole(_) | ReservedPriority | DuplicatePriority { .. }
            | DuplicateAssignment { .. } | AutoRole(_) => {
                Self::new(StatusCode::CONFLICT, e.to_string())
            }
            Backend(_) => Self::internal(e),
        }
    }
}

impl From<TemplateError> for ApiError {
    fn from(e: TemplateError) -> Self {
        match e {
            TemplateError::UnknownDialog(name) => Self::not_found(format!("unknown dialog `{name}`")),
            other => Self::internal(other),
        }
    }
}

impl From<BizDbError> for ApiError {
    fn from(e: BizDbError) -> Self {
        Self::internal(e)
    }
}
