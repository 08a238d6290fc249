use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use biaslens_core::StoreError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// The closed set of machine-readable error codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ValidationFailed,
    RunNotFound,
    ComparisonNotFound,
    RunNotComplete,
    RunConflict,
    RunSealed,
    GroupTooSmall,
    IncomparableRuns,
    EmptyRun,
    AdapterFailed,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 11] = [
        ErrorCode::ValidationFailed,
        ErrorCode::RunNotFound,
        ErrorCode::ComparisonNotFound,
        ErrorCode::RunNotComplete,
        ErrorCode::RunConflict,
        ErrorCode::RunSealed,
        ErrorCode::GroupTooSmall,
        ErrorCode::IncomparableRuns,
        ErrorCode::EmptyRun,
        ErrorCode::AdapterFailed,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::ValidationFailed => "validation_failed",
            ErrorCode::RunNotFound => "run_not_found",
            ErrorCode::ComparisonNotFound => "comparison_not_found",
            ErrorCode::RunNotComplete => "run_not_complete",
            ErrorCode::RunConflict => "run_conflict",
            ErrorCode::RunSealed => "run_sealed",
            ErrorCode::GroupTooSmall => "group_too_small",
            ErrorCode::IncomparableRuns => "incomparable_runs",
            ErrorCode::EmptyRun => "empty_run",
            ErrorCode::AdapterFailed => "adapter_failed",
            ErrorCode::Internal => "internal",
        }
    }

    pub fn parse(code: &str) -> Option<Self> {
        ErrorCode::ALL.into_iter().find(|c| c.as_str() == code)
    }

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::ValidationFailed | ErrorCode::GroupTooSmall | ErrorCode::IncomparableRuns => {
                StatusCode::BAD_REQUEST
            }
            ErrorCode::RunNotFound | ErrorCode::ComparisonNotFound => StatusCode::NOT_FOUND,
            ErrorCode::RunNotComplete | ErrorCode::RunConflict | ErrorCode::RunSealed | ErrorCode::EmptyRun => {
                StatusCode::CONFLICT
            }
            ErrorCode::AdapterFailed => StatusCode::BAD_GATEWAY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::ValidationFailed, message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.code.as_str(), self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let message = err.to_string();
        match err {
            StoreError::Validation(fields) => ApiError::validation(message)
                .with_detail(serde_json::json!({ "fields": fields })),
            StoreError::RunNotFound(_) => ApiError::new(ErrorCode::RunNotFound, message),
            StoreError::ComparisonNotFound(_) => ApiError::new(ErrorCode::ComparisonNotFound, message),
            StoreError::Conflict(_) => ApiError::new(ErrorCode::RunConflict, message),
            StoreError::NotComplete { state, .. } => ApiError::new(ErrorCode::RunNotComplete, message)
                .with_detail(serde_json::json!({ "state": state })),
            StoreError::Sealed(_) => ApiError::new(ErrorCode::RunSealed, message),
            StoreError::EmptyRun => ApiError::new(ErrorCode::EmptyRun, message),
            StoreError::AdapterFailed(_) => ApiError::new(ErrorCode::AdapterFailed, message),
            StoreError::Incomparable(_) => ApiError::new(ErrorCode::IncomparableRuns, message),
            StoreError::GroupTooSmall(_) => ApiError::new(ErrorCode::GroupTooSmall, message),
            StoreError::LexiconMismatch { .. } => ApiError::new(ErrorCode::IncomparableRuns, message),
            StoreError::Corrupt { .. } | StoreError::Io { .. } => {
                tracing::error!(error = %message, "store failure");
                ApiError::new(ErrorCode::Internal, message)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}
