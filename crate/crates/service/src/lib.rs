//! JSON-over-HTTP session service for live conversations with the engine.
//!
//! | method | path                          | body            |
//! |--------|-------------------------------|-----------------|
//! | POST   | `/api/sessions`               | `{level, scenario?}` |
//! | POST   | `/api/sessions/{id}/messages` | `{text}`        |
//! | GET    | `/api/sessions/{id}`          |                 |
//! | POST   | `/api/sessions/{id}/close`    |                 |
//! | GET    | `/api/levels`                 |                 |
//!
//! Errors come back as `{"error": code, "message": text}`.

mod session;

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use proactiva_core::llm::LlmError;
use proactiva_core::react::ReactError;
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

pub use session::{ClosedSession, Created, Posted, ServiceError, SessionStatus, SessionStore, SessionView};

impl ServiceError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        match self {
            Self::InvalidLevel(_) => (StatusCode::BAD_REQUEST, "invalid_level"),
            Self::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            Self::SessionNotFound(_) => (StatusCode::NOT_FOUND, "session_not_found"),
            Self::SessionClosed(_) => (StatusCode::CONFLICT, "session_closed"),
            Self::Busy(_) => (StatusCode::CONFLICT, "busy"),
            Self::Engine(ReactError::InvalidInput(_)) => (StatusCode::BAD_REQUEST, "bad_request"),
            Self::Engine(ReactError::Llm(LlmError::InvalidRequest(_)) | ReactError::Dialogue(_)) => {
                (StatusCode::BAD_REQUEST, "bad_request")
            }
            Self::Engine(ReactError::Llm(_) | ReactError::Rewrite(_) | ReactError::UnparsableStep(_)) => {
                (StatusCode::BAD_GATEWAY, "backend_error")
            }
            Self::Engine(_) => (StatusCode::INTERNAL_SERVER_ERROR, "engine_error"),
            Self::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io_error"),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        if status.is_server_error() || status == StatusCode::BAD_GATEWAY {
            tracing::warn!(error = %self, "request failed");
        }
        (status, Json(json!({ "error": code, "message": self.to_string() }))).into_response()
    }
}

fn bad_json(rejection: JsonRejection) -> ServiceError {
    ServiceError::BadRequest(rejection.body_text())
}

type Shared = Arc<SessionStore>;

/// Runs a store call off the async workers; engine calls block on the backend.
async fn blocking<T, F>(store: Shared, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .unwrap_or_else(|e| Err(ServiceError::BadRequest(format!("request aborted: {e}"))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    level: i64,
    #[serde(default)]
    scenario: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
}

async fn create(
    State(store): State<Shared>,
    body: Result<Json<CreateBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ServiceError> {
    let Json(body) = body.map_err(bad_json)?;
    let created = blocking(store, move |s| s.create(body.level, body.scenario.as_deref())).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn message(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<MessageBody>, JsonRejection>,
) -> Result<Json<Posted>, ServiceError> {
    let Json(body) = body.map_err(bad_json)?;
    Ok(Json(blocking(store, move |s| s.post_message(&id, &body.text)).await?))
}

async fn view(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    Ok(Json(store.view(&id)?))
}

async fn close(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<ClosedSession>, ServiceError> {
    Ok(Json(blocking(store, move |s| s.close(&id)).await?))
}

async fn levels(State(store): State<Shared>) -> impl IntoResponse {
    Json(store.levels())
}

/// The API routes alone.
pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}", get(view))
        .route("/api/sessions/{id}/messages", post(message))
        .route("/api/sessions/{id}/close", post(close))
        .route("/api/levels", get(levels))
        .with_state(store)
}

/// API routes plus CORS and, optionally, static UI assets for every other path.
pub fn app(store: Shared, static_dir: Option<PathBuf>) -> Router {
    let api = router(store).layer(CorsLayer::permissive());
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
