use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use restoration_core::ModelError;
use serde::Serialize;

/// JSON error body returned by every failing endpoint.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub code: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axiom: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: message.into(), code, axiom: None, hint: None } }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} '{id}' does not exist"))
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.body.hint = Some(hint.into());
        self
    }
}

/// Name of the travel-time or probability axiom a load error violates.
pub fn violated_axiom(err: &ModelError) -> Option<&'static str> {
    match err {
        ModelError::NonZeroDiagonal { .. } => Some("zero_diagonal"),
        ModelError::ZeroTravel { .. } => Some("positivity"),
        ModelError::Triangle { .. } => Some("triangle_inequality"),
        ModelError::ProbabilityRange { .. } => Some("probability_range"),
        _ => None,
    }
}

impl From<ModelError> for ApiError {
    fn from(err: ModelError) -> Self {
        let mut api = ApiError::new(StatusCode::BAD_REQUEST, "invalid_problem", err.to_string());
        api.body.axiom = violated_axiom(&err);
        api
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
