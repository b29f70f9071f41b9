use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("stale revision {given}, current is {current}")]
    Conflict { given: u64, current: u64 },
    #[error("need at least {required} pairs to optimize, session has {got}")]
    InsufficientPairs { required: usize, got: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cityframe_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

macro_rules! core_from {
    ($($t:ty),*) => {$(
        impl From<$t> for ServiceError {
            fn from(e: $t) -> Self {
                ServiceError::Core(e.into())
            }
        }
    )*};
}

core_from!(
    cityframe_core::geometry::GeometryError,
    cityframe_core::mesh::MeshError,
    cityframe_core::georeg::GeoRegError,
    cityframe_core::pose::PoseError,
    cityframe_core::render::RenderError,
    cityframe_core::holistic::HolisticError,
    image::ImageError
);

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let msg = self.to_string();
        let (status, body) = match &self {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, json!({ "error": msg })),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, json!({ "error": msg })),
            ServiceError::Conflict { given, current } => (
                StatusCode::CONFLICT,
                json!({ "error": msg, "given": given, "current": current }),
            ),
            ServiceError::InsufficientPairs { required, got } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": "insufficient_pairs", "message": msg, "required": required, "got": got }),
            ),
            _ => {
                log::error!("{msg}");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": msg }))
            }
        };
        (status, Json(body)).into_response()
    }
}
