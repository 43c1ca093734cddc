//! JSON-over-HTTP front end for a [`Store`].
//!
//! | method | path | body / query |
//! |---|---|---|
//! | POST | `/projects` | [`CreateProject`] |
//! | GET | `/projects/{id}` | |
//! | GET | `/projects/{id}/tasks` | `?worker=` |
//! | GET | `/videos/{id}/plan` | `?project=` (optional) |
//! | POST | `/labels` | [`LabelsRequest`] |
//! | POST | `/timer` | [`TimerRequest`] |
//! | GET | `/projects/{id}/export` | |
//! | GET | `/projects/{id}/time` | |
//! | GET | `/frames/{video_id}/{timestamp}` | |
//!
//! Errors come back as `{"error": "..."}` with 400, 403, 404, 409 or 500.
//! Frames are read from `<frames_dir>/<video_id>/<t>.jpg` (or `.png`) with
//! `t` printed to three decimals.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::{AnnotationError, CreateProject, LabelSubmission, Store, TimerEvent};

#[derive(Clone)]
struct AppState {
    store: Arc<Store>,
    frames_dir: Option<Arc<PathBuf>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsRequest {
    pub project: String,
    pub labels: Vec<LabelSubmission>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimerRequest {
    pub project: String,
    #[serde(flatten)]
    pub event: TimerEvent,
}

#[derive(Deserialize)]
struct WorkerQuery {
    worker: Option<String>,
}

#[derive(Deserialize)]
struct ProjectQuery {
    project: Option<String>,
}

struct ApiError(AnnotationError);

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            AnnotationError::NotFound(_) => StatusCode::NOT_FOUND,
            AnnotationError::Invalid(_) | AnnotationError::Core(_) => StatusCode::BAD_REQUEST,
            AnnotationError::Forbidden(_) => StatusCode::FORBIDDEN,
            AnnotationError::Conflict(_) => StatusCode::CONFLICT,
            AnnotationError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Store calls can block on fsync or feature loading.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> crate::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AnnotationError::Storage(format!("worker task failed: {e}")))?
        .map_err(ApiError)
}

pub fn router(store: Arc<Store>, frames_dir: Option<PathBuf>) -> Router {
    let state = AppState { store, frames_dir: frames_dir.map(Arc::new) };
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/tasks", get(tasks))
        .route("/projects/{id}/export", get(export))
        .route("/projects/{id}/time", get(time))
        .route("/videos/{id}/plan", get(plan))
        .route("/labels", post(labels))
        .route("/timer", post(timer))
        .route("/frames/{video_id}/{timestamp}", get(frame))
        .with_state(state)
}

async fn create_project(State(s): State<AppState>, Json(req): Json<CreateProject>) -> ApiResult<impl IntoResponse> {
    let project = blocking(move || s.store.create_project(&req)).await?;
    log::info!("created project {} with {} videos", project.id, project.plans.len());
    Ok((StatusCode::CREATED, Json(project)))
}

async fn get_project(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.project(&id)?))
}

async fn tasks(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<WorkerQuery>,
) -> ApiResult<impl IntoResponse> {
    let worker = q.worker.ok_or_else(|| AnnotationError::Invalid("missing worker parameter".into()))?;
    Ok(Json(s.store.tasks(&id, &worker)?))
}

async fn plan(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ProjectQuery>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.plan(&id, q.project.as_deref())?))
}

async fn labels(State(s): State<AppState>, Json(req): Json<LabelsRequest>) -> ApiResult<impl IntoResponse> {
    let accepted = blocking(move || s.store.submit_labels(&req.project, req.labels)).await?;
    Ok(Json(serde_json::json!({ "accepted": accepted })))
}

async fn timer(State(s): State<AppState>, Json(req): Json<TimerRequest>) -> ApiResult<impl IntoResponse> {
    blocking(move || s.store.record_timer(&req.project, req.event)).await?;
    Ok(Json(serde_json::json!({ "ok": true })))
}

async fn export(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.export(&id)?))
}

async fn time(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.time_summary(&id)?))
}

/// Video ids become a directory name, so only plain names are allowed.
fn safe_component(s: &str) -> bool {
    !s.is_empty() && !s.starts_with('.') && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

async fn frame(
    State(s): State<AppState>,
    Path((video_id, timestamp)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let dir = s.frames_dir.clone().ok_or_else(|| AnnotationError::NotFound("frame store".into()))?;
    if !safe_component(&video_id) {
        return Err(AnnotationError::Invalid(format!("bad video id {video_id:?}")).into());
    }
    let t: f64 = timestamp
        .parse()
        .ok()
        .filter(|t: &f64| t.is_finite() && *t >= 0.0)
        .ok_or_else(|| AnnotationError::Invalid(format!("bad timestamp {timestamp:?}")))?;
    let (bytes, mime) = blocking(move || {
        for (ext, mime) in [("jpg", "image/jpeg"), ("png", "image/png")] {
            let path = dir.join(&video_id).join(format!("{t:.3}.{ext}"));
            match std::fs::read(&path) {
                Ok(bytes) => return Ok((bytes, mime)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(AnnotationError::Storage(format!("{}: {e}", path.display()))),
            }
        }
        Err(AnnotationError::NotFound(format!("frame {video_id}@{t:.3}")))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, mime)], bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_filter() {
        assert!(safe_component("video_01-a.b"));
        for bad in ["", "..", ".hidden", "a/b", "a\\b", "a b"] {
            assert!(!safe_component(bad), "{bad}");
        }
    }
}
