use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;
use tower_http::services::ServeDir;

use divbench_core::json as dj;
use divbench_core::RatingRecord;

use crate::service::{Service, ServiceError, Submission};
use crate::study::CreateStudy;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ServiceError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        (
            status,
            Json(json!({"error": {"kind": kind, "message": self.0.to_string()}})),
        )
            .into_response()
    }
}

type Shared = Arc<Service>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError(ServiceError::BadRequest(format!("invalid body: {e}"))))
}

async fn blocking<T, F>(svc: &Shared, f: F) -> Result<T, ApiError>
where
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError(ServiceError::BadRequest(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn create_study(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: CreateStudy = parse(&body)?;
    let key = match headers.get(IDEMPOTENCY_HEADER) {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| {
                    ApiError(ServiceError::BadRequest(
                        "idempotency key is not ASCII".into(),
                    ))
                })?
                .to_string(),
        ),
        None => None,
    };
    let created = blocking(&svc, move |s| s.create_study(req, key)).await?;
    let status = if created.created {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    };
    Ok((status, Json(created)).into_response())
}

async fn summary(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(svc.summary(&id)?).into_response())
}

async fn next_task(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let rater = q.get("rater_id").map(String::as_str).unwrap_or("");
    Ok(match svc.next_task(&id, rater)? {
        Some(view) => Json(view).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit(
    State(svc): State<Shared>,
    Path(task): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let sub: Submission = parse(&body)?;
    let rec = blocking(&svc, move |s| s.submit(&task, sub)).await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"task_id": rec.task_id, "rater_id": rec.rater_id})),
    )
        .into_response())
}

async fn export(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = svc.export_jsonl(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn import(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let records: Vec<RatingRecord> = dj::parse_jsonl(&body[..], "request body")
        .map_err(|e| ApiError(ServiceError::BadRequest(e.to_string())))?;
    let report = blocking(&svc, move |s| s.import(&id, records)).await?;
    Ok(Json(report).into_response())
}

async fn not_found() -> ApiError {
    ApiError(ServiceError::NotFound("no such endpoint".into()))
}

pub fn router(svc: Arc<Service>, static_dir: Option<&std::path::Path>) -> Router {
    let mut r = Router::new()
        .route("/v1/studies", post(create_study))
        .route("/v1/studies/{id}", get(summary))
        .route("/v1/studies/{id}/tasks/next", get(next_task))
        .route("/v1/studies/{id}/export", get(export))
        .route("/v1/studies/{id}/import", post(import))
        .route("/v1/tasks/{id}/rating", post(submit));
    if let Some(dir) = static_dir {
        r = r.nest_service("/static", ServeDir::new(dir));
    }
    r.fallback(not_found).with_state(svc)
}
