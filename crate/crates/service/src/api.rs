//! HTTP+JSON routes.
//!
//! | route | |
//! |---|---|
//! | `POST /studies` | raw DICOM body; 202 with `{study_id, created}` |
//! | `GET /studies/{id}` | study record, receipt time and decision |
//! | `GET /worklist` | filters `status`, `triage`, `age`, `sex`, `manufacturer`, `machine` |
//! | `GET /studies/{id}/predictions` | the prediction set |
//! | `GET /studies/{id}/feedback` | every verdict recorded for the study, in log order |
//! | `POST /predictions/{id}/feedback` | one verdict; reviewer from `x-reviewer-id` |
//! | `GET /reports/live` | post-deployment metrics, `?format=csv\|markdown\|json` |
//! | `GET /reports/subgroup?by=` | one subgroup table from live feedback |
//! | `GET /health` | liveness and per-status counts |

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cxr_core::metrics::{render_report, render_subgroup, Dimension, ReportFormat};
use cxr_core::pipeline::FeedbackError;
use serde::Serialize;
use serde_json::json;

use crate::service::{FeedbackFailure, FeedbackRequest, LookupError, Service, SubmitError, WorklistFilter};

pub const REVIEWER_HEADER: &str = "x-reviewer-id";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        Self {
            status,
            message: message.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        let status = match e {
            SubmitError::Empty | SubmitError::BadPreamble => StatusCode::BAD_REQUEST,
            SubmitError::TooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            SubmitError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

impl From<FeedbackFailure> for ApiError {
    fn from(e: FeedbackFailure) -> Self {
        let status = match e {
            FeedbackFailure::UnknownStudy(_) | FeedbackFailure::Rejected(FeedbackError::UnknownFinding(_)) => {
                StatusCode::NOT_FOUND
            }
            FeedbackFailure::Rejected(FeedbackError::IllegalState(_)) => StatusCode::CONFLICT,
            FeedbackFailure::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

impl From<LookupError> for ApiError {
    fn from(e: LookupError) -> Self {
        let status = match e {
            LookupError::UnknownStudy(_) => StatusCode::NOT_FOUND,
            LookupError::NoPrediction { .. } => StatusCode::CONFLICT,
        };
        ApiError::new(status, e)
    }
}

type Shared = Arc<Service>;

pub fn router(svc: Shared) -> Router {
    // Let the handler see one byte past the cap so it can answer 413 itself.
    let limit = svc.config().max_upload_bytes.saturating_add(1);
    Router::new()
        .route("/studies", post(submit).layer(DefaultBodyLimit::max(limit)))
        .route("/studies/{id}", get(study))
        .route("/studies/{id}/predictions", get(predictions))
        .route("/studies/{id}/feedback", get(study_feedback))
        .route("/worklist", get(worklist))
        .route("/predictions/{id}/feedback", post(feedback))
        .route("/reports/live", get(live))
        .route("/reports/subgroup", get(subgroup))
        .route("/health", get(health))
        .with_state(svc)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))
}

async fn submit(State(svc): State<Shared>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let out = blocking(move || svc.submit(&body)).await??;
    Ok((StatusCode::ACCEPTED, Json(out)))
}

async fn study(State(svc): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    svc.study(&id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown study {id}")))
}

async fn predictions(State(svc): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(svc.prediction(&id)?))
}

async fn study_feedback(State(svc): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    svc.study_feedback(&id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown study {id}")))
}

async fn worklist(
    State(svc): State<Shared>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<impl IntoResponse, ApiError> {
    let filter = WorklistFilter::from_query(&q).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    Ok(Json(svc.worklist(&filter)))
}

async fn feedback(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: FeedbackRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let from_header = headers
        .get(REVIEWER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let reviewer = from_header
        .or_else(|| req.reviewer_id.clone())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("missing {REVIEWER_HEADER} header")))?;
    let ack = blocking(move || svc.record_feedback(&id, req, &reviewer)).await??;
    Ok(Json(ack))
}

fn format_param(q: &HashMap<String, String>) -> Result<Option<ReportFormat>, ApiError> {
    match q.get("format").map(String::as_str) {
        None | Some("json") => Ok(None),
        Some(f) => f
            .parse()
            .map(Some)
            .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, e)),
    }
}

fn rendered(format: ReportFormat, body: String) -> Response {
    let mime = match format {
        ReportFormat::Csv => "text/csv; charset=utf-8",
        ReportFormat::Markdown => "text/markdown; charset=utf-8",
    };
    ([(header::CONTENT_TYPE, mime)], body).into_response()
}

fn check_keys(q: &HashMap<String, String>, allowed: &[&str]) -> Result<(), ApiError> {
    match q.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown parameter {k:?}"))),
        None => Ok(()),
    }
}

async fn live(State(svc): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    check_keys(&q, &["format"])?;
    let report = svc.live_report();
    Ok(match format_param(&q)? {
        Some(f) => rendered(f, render_report(&report, f)),
        None => Json(report).into_response(),
    })
}

async fn subgroup(State(svc): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    check_keys(&q, &["by", "format"])?;
    let by: Dimension = q
        .get("by")
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing parameter by"))?
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let table = svc.live_subgroup(by);
    Ok(match format_param(&q)? {
        Some(f) => rendered(f, render_subgroup(&table, f)),
        None => Json(table).into_response(),
    })
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    backend: String,
    studies: HashMap<&'static str, usize>,
}

async fn health(State(svc): State<Shared>) -> impl IntoResponse {
    Json(Health {
        status: "ok",
        backend: svc.config().backend.name().to_string(),
        studies: svc.status_counts(),
    })
}
