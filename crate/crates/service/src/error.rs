use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use robosource_core::api::ErrorBody;
use robosource_core::CurationError;

/// An error response: a status code plus `{error, detail}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub error: &'static str,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, detail: impl Into<String>) -> Self {
        ApiError { status, error, detail: detail.into() }
    }

    pub fn unprocessable(detail: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", detail)
    }
}

impl From<CurationError> for ApiError {
    fn from(e: CurationError) -> Self {
        let detail = e.to_string();
        let (status, error) = match e {
            CurationError::RecordNotFound(_) => (StatusCode::NOT_FOUND, "record_not_found"),
            CurationError::AlreadyDecided(_) => (StatusCode::CONFLICT, "already_decided"),
            CurationError::DuplicateExercise(_) => (StatusCode::CONFLICT, "duplicate_exercise"),
            CurationError::NotInConsensusState(_) => (StatusCode::UNPROCESSABLE_ENTITY, "not_in_consensus_state"),
            CurationError::TooFewReviewers(_) => (StatusCode::UNPROCESSABLE_ENTITY, "too_few_reviewers"),
            CurationError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed"),
            CurationError::CorruptLog { .. } | CurationError::Io(_) => {
                tracing::error!(%detail, "event log failure");
                (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure")
            }
        };
        ApiError { status, error, detail }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.error.to_string(), detail: self.detail })).into_response()
    }
}
