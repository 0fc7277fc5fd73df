//! HTTP backend for staged human annotation.
//!
//! Annotators pull one card at a time from `GET /api/task`, answer it with
//! `POST /api/label` and move through a record step by step. Votes go to an
//! append-only log that is replayed on startup.
//!
//! | Method | Path | Body / query | Response |
//! |---|---|---|---|
//! | GET | `/api/task` | `?annotator=<id>` | `{"status":"task","card":{..}}` or `{"status":"done"}` |
//! | POST | `/api/label` | `{"token","label"}` | [`Ack`] |
//! | GET | `/api/progress` | | [`ProgressReport`] |
//! | GET | `/api/record/{id}` | | the record with all votes so far |
//! | GET | `/api/image/{id}` | | image bytes, or 204 for text-only records |

pub mod stage;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use store::{Ack, AnnotationStore, CardToken, LoggedVote, ProgressReport, StoreError, TaskCard};

pub struct AppState {
    store: Mutex<AnnotationStore>,
    image_root: PathBuf,
}

impl AppState {
    pub fn new(store: AnnotationStore, image_root: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            store: Mutex::new(store),
            image_root: image_root.into(),
        })
    }

    pub fn store(&self) -> MutexGuard<'_, AnnotationStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

struct ApiError(StoreError);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            StoreError::BadAnnotator(_) | StoreError::BadToken(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            StoreError::UnknownRecord(_) => (StatusCode::NOT_FOUND, "unknown_record"),
            StoreError::OutsideDomain { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "label_outside_domain"),
            StoreError::Stale { .. } => (StatusCode::CONFLICT, "stale_token"),
            StoreError::Log { .. } | StoreError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        let mut body = json!({ "error": code, "message": self.0.to_string() });
        if let StoreError::OutsideDomain { allowed, .. } = &self.0 {
            body["allowed"] = json!(allowed);
        }
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct TaskQuery {
    annotator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum TaskResponse {
    Task { card: Box<TaskCard> },
    Done,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRequest {
    pub token: String,
    pub label: String,
}

async fn next_task(State(state): State<Arc<AppState>>, Query(q): Query<TaskQuery>) -> Result<Json<TaskResponse>, ApiError> {
    let card = state.store().next_task(&q.annotator)?;
    Ok(Json(match card {
        Some(card) => TaskResponse::Task { card: Box::new(card) },
        None => TaskResponse::Done,
    }))
}

async fn submit_label(State(state): State<Arc<AppState>>, Json(req): Json<LabelRequest>) -> Result<Json<Ack>, ApiError> {
    Ok(Json(state.store().submit(&req.token, &req.label)?))
}

async fn progress(State(state): State<Arc<AppState>>) -> Json<ProgressReport> {
    Json(state.store().progress())
}

async fn record(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.store().export_record(&id)?).into_response())
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn image(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let path = state.store().image_path(&id, &state.image_root)?;
    let Some(path) = path else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response()),
        Err(_) => Err(StoreError::UnknownRecord(id).into()),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/task", get(next_task))
        .route("/api/label", post(submit_label))
        .route("/api/progress", get(progress))
        .route("/api/record/{id}", get(record))
        .route("/api/image/{id}", get(image))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
