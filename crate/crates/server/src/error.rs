//! Service errors as HTTP responses: a status and `{"error", "message"}`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use expertloop::channel::ChannelError;
use expertloop::onboarding::OnboardingError;
use expertloop::service::ServiceError;
use expertloop::workflow::WorkflowError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("missing or wrong admin token")]
    Unauthorized,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("worker failed: {0}")]
    Internal(String),
}

impl ApiError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        use StatusCode as S;
        match self {
            ApiError::Unauthorized => (S::UNAUTHORIZED, "unauthorized"),
            ApiError::BadRequest(_) => (S::BAD_REQUEST, "bad_request"),
            ApiError::NotFound(_) => (S::NOT_FOUND, "not_found"),
            ApiError::Internal(_) => (S::INTERNAL_SERVER_ERROR, "internal"),
            ApiError::Service(e) => match e {
                ServiceError::Channel(ChannelError::SchemaViolation(_)) => (S::BAD_REQUEST, "schema_violation"),
                ServiceError::Channel(_) => (S::BAD_REQUEST, "channel"),
                ServiceError::UnknownSender(_) => (S::NOT_FOUND, "unknown_sender"),
                ServiceError::UnknownUser(_) | ServiceError::Onboarding(OnboardingError::UnknownUser(_)) => {
                    (S::NOT_FOUND, "unknown_user")
                }
                ServiceError::Onboarding(OnboardingError::DuplicateEnrollment(_)) => (S::CONFLICT, "duplicate_enrollment"),
                ServiceError::Onboarding(OnboardingError::Inactive(_)) => (S::CONFLICT, "inactive"),
                ServiceError::Onboarding(_) => (S::BAD_REQUEST, "invalid_form"),
                ServiceError::Workflow(w) => match w {
                    WorkflowError::UnknownTask(_) => (S::NOT_FOUND, "unknown_task"),
                    WorkflowError::AlreadyDecided(_) => (S::CONFLICT, "already_decided"),
                    WorkflowError::CorrectionPendingElsewhere(_) => (S::CONFLICT, "correction_pending_elsewhere"),
                    WorkflowError::WrongState { .. } => (S::CONFLICT, "wrong_state"),
                    WorkflowError::RerouteDisabled(_) => (S::CONFLICT, "reroute_disabled"),
                    WorkflowError::NotAssignedExpert { .. } => (S::FORBIDDEN, "not_assigned"),
                    WorkflowError::WrongExpert(_) => (S::FORBIDDEN, "wrong_expert"),
                    WorkflowError::IllegalTransition { .. } => (S::INTERNAL_SERVER_ERROR, "illegal_transition"),
                },
                ServiceError::Kb(_) => (S::BAD_REQUEST, "invalid_review"),
                ServiceError::EmptyCorrection => (S::BAD_REQUEST, "empty_correction"),
                ServiceError::Log(_) | ServiceError::Poisoned => (S::SERVICE_UNAVAILABLE, "storage"),
                ServiceError::Replay(_) | ServiceError::Knowledge(_) | ServiceError::Setup(_) => {
                    (S::INTERNAL_SERVER_ERROR, "internal")
                }
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(json!({"error": code, "message": self.to_string()}))).into_response()
    }
}
