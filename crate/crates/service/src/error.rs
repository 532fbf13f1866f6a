use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};
use tox2::Error;

/// Error body shared by every endpoint.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code, message: message.into(), details: Value::Null } }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.body.details = details;
        self
    }

    pub fn too_large(message: impl Into<String>) -> Self {
        Self::new(StatusCode::PAYLOAD_TOO_LARGE, "too_large", message)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.body.code, self.body.message);
        }
        (self.status, Json(self.body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InfeasibleCorrelation { rho, lo, hi } => ApiError::unprocessable("infeasible_correlation", message)
                .with_details(json!({ "rho": rho, "feasibleRho": { "lo": lo, "hi": hi } })),
            Error::InfeasibleCalibration { target, tau_min, tau_max, alpha_at_max } => {
                ApiError::unprocessable("infeasible_calibration", message).with_details(json!({
                    "targetAlpha": target,
                    "tauMin": tau_min,
                    "tauMax": tau_max,
                    "alphaAtMax": alpha_at_max,
                }))
            }
            Error::DegeneratePrior(_) | Error::DegenerateDensity => ApiError::unprocessable("degenerate_prior", message),
            Error::Domain(_) => ApiError::unprocessable("domain", message),
            Error::Config(_) => ApiError::unprocessable("invalid_config", message),
            Error::State(_) => ApiError::unprocessable("invalid_state", message),
            Error::Resource(_) => ApiError::too_large(message),
            Error::Quadrature(_) => ApiError::internal(message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let message = r.body_text();
        match r {
            JsonRejection::JsonSyntaxError(_) => ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", message),
            JsonRejection::JsonDataError(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", message),
            JsonRejection::MissingJsonContentType(_) => {
                ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media_type", message)
            }
            other if other.status() == StatusCode::PAYLOAD_TOO_LARGE => ApiError::too_large(message),
            other => ApiError::new(StatusCode::BAD_REQUEST, "bad_request", other.body_text()),
        }
    }
}
