//! HTTP API. Errors are `application/problem+json` bodies carrying a
//! machine-readable `code`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use demo2plan::compiler::MEDIA_TYPE;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::pipeline::{ArtifactKind, JobInputs, NamedFile, Pipeline, ReviewRequest};
use crate::{JobRecord, PipelineError};

pub const PROBLEM_JSON: &str = "application/problem+json";
pub const MAX_UPLOAD_BYTES: usize = 512 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    #[serde(rename = "type")]
    pub kind: String,
    pub title: String,
    pub status: u16,
    pub detail: String,
    pub code: String,
}

impl Problem {
    pub fn new(status: u16, code: &str, detail: impl Into<String>) -> Self {
        let title = StatusCode::from_u16(status)
            .ok()
            .and_then(|s| s.canonical_reason())
            .unwrap_or("Error")
            .to_string();
        Problem { kind: format!("urn:demo2plan:problem:{code}"), title, status, detail: detail.into(), code: code.into() }
    }
}

impl IntoResponse for Problem {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = serde_json::to_string(&self).expect("problem serializes");
        (status, [(header::CONTENT_TYPE, PROBLEM_JSON)], body).into_response()
    }
}

impl From<PipelineError> for Problem {
    fn from(e: PipelineError) -> Self {
        Problem::new(e.status(), e.code(), e.to_string())
    }
}

type ApiResult<T> = Result<T, Problem>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, PipelineError> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(Problem::from),
        Err(e) => Err(Problem::new(500, "internal", format!("worker panicked: {e}"))),
    }
}

pub fn router(pipeline: Arc<Pipeline>) -> Router {
    Router::new()
        .route("/api/healthz", get(healthz))
        .route("/api/jobs", post(create_job).get(list_jobs))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/advance", post(advance))
        .route("/api/jobs/{id}/review", post(review))
        .route("/api/jobs/{id}/transcript", get(|s, p| artifact(s, p, ArtifactKind::Transcript)))
        .route("/api/jobs/{id}/scene", get(|s, p| artifact(s, p, ArtifactKind::Scene)))
        .route("/api/jobs/{id}/anchors", get(|s, p| artifact(s, p, ArtifactKind::Anchors)))
        .route("/api/jobs/{id}/plan", get(|s, p| artifact(s, p, ArtifactKind::Plan)))
        .route("/api/jobs/{id}/document", get(|s, p| artifact(s, p, ArtifactKind::Document)))
        .fallback(|| async { Problem::new(404, "not_found", "no such endpoint") })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(pipeline)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_jobs(State(p): State<Arc<Pipeline>>) -> ApiResult<Json<Vec<JobRecord>>> {
    blocking(move || p.list()).await.map(Json)
}

async fn get_job(State(p): State<Arc<Pipeline>>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    blocking(move || p.get(&id)).await.map(Json)
}

fn multipart_problem(e: axum::extract::multipart::MultipartError) -> Problem {
    let status = e.status().as_u16();
    let code = if status == 413 { "payload_too_large" } else { "invalid_argument" };
    Problem::new(status, code, e.body_text())
}

/// Multipart fields: `frames` (repeated files), `stream` (file), `depth`
/// (repeated files named by the relative path the stream uses) and
/// `instruction` (text).
async fn create_job(State(p): State<Arc<Pipeline>>, mut multipart: Multipart) -> ApiResult<Response> {
    let mut inputs = JobInputs::default();
    while let Some(field) = multipart.next_field().await.map_err(multipart_problem)? {
        let name = field.name().unwrap_or_default().to_string();
        let file_name = field.file_name().map(str::to_string);
        let bytes = field.bytes().await.map_err(multipart_problem)?.to_vec();
        match name.as_str() {
            "frames" | "depth" => {
                let file = NamedFile {
                    name: file_name.ok_or_else(|| Problem::new(400, "invalid_argument", format!("{name} parts need a file name")))?,
                    bytes,
                };
                if name == "frames" { inputs.frames.push(file) } else { inputs.depth.push(file) }
            }
            "stream" => inputs.stream = Some(bytes),
            "instruction" => {
                inputs.instruction = Some(String::from_utf8(bytes).map_err(|_| Problem::new(400, "invalid_argument", "instruction is not UTF-8"))?)
            }
            other => return Err(Problem::new(400, "invalid_argument", format!("unexpected field `{other}`"))),
        }
    }
    let record = blocking(move || p.create_job(inputs)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "job_id": record.job_id, "state": record.state }))).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct AdvanceQuery {
    /// Run the stage before responding instead of in the background.
    #[serde(default)]
    wait: bool,
}

async fn advance(State(p): State<Arc<Pipeline>>, Path(id): Path<String>, Query(q): Query<AdvanceQuery>) -> ApiResult<Response> {
    let (p2, id2) = (p.clone(), id.clone());
    let (stage, record) = blocking(move || p2.begin_advance(&id2)).await?;
    if q.wait {
        let record = blocking(move || p.run_stage(&id, stage)).await?;
        return Ok(Json(record).into_response());
    }
    tokio::task::spawn_blocking(move || {
        if let Err(e) = p.run_stage(&id, stage) {
            log::error!("job {id}: {e}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(record)).into_response())
}

async fn review(State(p): State<Arc<Pipeline>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<JobRecord>> {
    let request: ReviewRequest =
        serde_json::from_slice(&body).map_err(|e| Problem::new(400, "invalid_argument", format!("review body: {e}")))?;
    blocking(move || p.submit_review(&id, &request)).await.map(Json)
}

async fn artifact(State(p): State<Arc<Pipeline>>, Path(id): Path<String>, kind: ArtifactKind) -> ApiResult<Response> {
    let text = blocking(move || p.artifact(&id, kind)).await?;
    let media = if kind == ArtifactKind::Document { MEDIA_TYPE } else { "application/json" };
    Ok(([(header::CONTENT_TYPE, media)], text).into_response())
}

/// Serves the API until interrupted, on a runtime built here so callers
/// stay synchronous.
pub fn serve(pipeline: Arc<Pipeline>, bind: &str) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let app = router(pipeline);
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
