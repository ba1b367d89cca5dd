//! HTTP JSON API. Errors are `{code, message, detail}`.
//!
//! Evaluator reads carry the token in the path; submissions carry it as
//! `Authorization: Bearer <token>`. Admin routes need the admin token when
//! one is configured.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AssignRequest, EvalService, SampleRequest, Task};
use crate::analysis::{self, Dataset, MetricsReport};
use crate::error::Error;
use crate::quality_model::{
    attribute_catalog, rubric, AttributeDescriptor, RelatednessMap, RubricDimension, RubricLevel,
};

pub struct ApiState {
    pub service: Arc<EvalService>,
    pub admin_token: Option<String>,
    pub relatedness: RelatednessMap,
}

pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Unauthorized(_) => StatusCode::UNAUTHORIZED,
        Error::Validation(_) | Error::UnknownAttribute(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::InvalidArgument(_) | Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => StatusCode::BAD_REQUEST,
        Error::Conflict(_) | Error::Capacity { .. } => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let detail = match &self.0 {
            Error::Capacity {
                what,
                requested,
                available,
            } => json!({"what": what, "requested": requested, "available": available}),
            _ => Value::Null,
        };
        let body = json!({"code": self.0.code(), "message": self.0.to_string(), "detail": detail});
        (status_for(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError(Error::InvalidArgument(e.body_text())))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(axum::http::header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn evaluator(state: &ApiState, headers: &HeaderMap) -> Result<String, ApiError> {
    let token = bearer(headers).ok_or_else(|| Error::Unauthorized("missing bearer token".into()))?;
    Ok(state.service.evaluator_for_token(token)?)
}

fn admin(state: &ApiState, headers: &HeaderMap) -> Result<(), ApiError> {
    match &state.admin_token {
        None => Ok(()),
        Some(expected) if bearer(headers) == Some(expected.as_str()) => Ok(()),
        Some(_) => Err(Error::Unauthorized("admin token required".into()).into()),
    }
}

fn item(state: &ApiState, item_id: &str, task: Task) -> Result<String, ApiError> {
    Ok(state.service.item_for_task(item_id, task)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Catalog {
    pub attributes: Vec<AttributeDescriptor>,
    pub validity_rubric: Vec<RubricLevel>,
    pub applicability_rubric: Vec<RubricLevel>,
}

async fn catalog() -> Json<Catalog> {
    Json(Catalog {
        attributes: attribute_catalog(),
        validity_rubric: rubric(RubricDimension::Validity),
        applicability_rubric: rubric(RubricDimension::Applicability),
    })
}

async fn assignments(
    State(state): State<Arc<ApiState>>,
    Path(token): Path<String>,
) -> ApiResult<super::AssignmentSummary> {
    let id = state.service.evaluator_for_token(&token)?;
    Ok(Json(state.service.summary(&id)?))
}

async fn scoring_task(
    State(state): State<Arc<ApiState>>,
    Path(token): Path<String>,
) -> ApiResult<super::ScoringPayload> {
    let id = state.service.evaluator_for_token(&token)?;
    Ok(Json(state.service.scoring_payload(&id)?))
}

async fn selection_task(
    State(state): State<Arc<ApiState>>,
    Path(token): Path<String>,
) -> ApiResult<super::SelectionPayload> {
    let id = state.service.evaluator_for_token(&token)?;
    Ok(Json(state.service.selection_payload(&id)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSubmission {
    pub nfr_id: String,
    pub validity: i64,
    pub applicability: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReceipt {
    pub nfr_id: String,
    pub validity: u8,
    pub applicability: u8,
    pub submitted_at: i64,
}

fn score_value(name: &str, v: i64) -> Result<u8, ApiError> {
    u8::try_from(v)
        .ok()
        .filter(|v| (1..=5).contains(v))
        .ok_or_else(|| Error::Validation(format!("{name} {v} outside 1..5")).into())
}

async fn post_score(
    State(state): State<Arc<ApiState>>,
    headers: HeaderMap,
    payload: Result<Json<ScoreSubmission>, JsonRejection>,
) -> ApiResult<ScoreReceipt> {
    let evaluator_id = evaluator(&state, &headers)?;
    let sub = body(payload)?;
    let validity = score_value("validity", sub.validity)?;
    let applicability = score_value("applicability", sub.applicability)?;
    let nfr_id = item(&state, &sub.nfr_id, Task::Scoring)?;
    let rec = state
        .service
        .record_score(&evaluator_id, &nfr_id, validity, applicability)?;
    Ok(Json(ScoreReceipt {
        nfr_id: sub.nfr_id,
        validity: rec.validity,
        applicability: rec.applicability,
        submitted_at: rec.submitted_at,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionSubmission {
    pub nfr_id: String,
    pub attribute: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReceipt {
    pub nfr_id: String,
    pub attribute: String,
    pub submitted_at: i64,
}

async fn post_selection(
    State(state): State<Arc<ApiState>>,
    headers: HeaderMap,
    payload: Result<Json<SelectionSubmission>, JsonRejection>,
) -> ApiResult<SelectionReceipt> {
    let evaluator_id = evaluator(&state, &headers)?;
    let sub = body(payload)?;
    let nfr_id = item(&state, &sub.nfr_id, Task::AttributeSelection)?;
    let rec = state.service.record_selection(&evaluator_id, &nfr_id, &sub.attribute)?;
    Ok(Json(SelectionReceipt {
        nfr_id: sub.nfr_id,
        attribute: rec.chosen_attribute.canonical_name().to_string(),
        submitted_at: rec.submitted_at,
    }))
}

async fn admin_sample(
    State(state): State<Arc<ApiState>>,
    headers: HeaderMap,
    payload: Result<Json<SampleRequest>, JsonRejection>,
) -> ApiResult<super::EvaluationSample> {
    admin(&state, &headers)?;
    Ok(Json(state.service.create_sample(&body(payload)?)?))
}

async fn admin_assign(
    State(state): State<Arc<ApiState>>,
    headers: HeaderMap,
    payload: Result<Json<AssignRequest>, JsonRejection>,
) -> ApiResult<Vec<super::IssuedAssignment>> {
    admin(&state, &headers)?;
    Ok(Json(state.service.assign_evaluators(&body(payload)?)?))
}

async fn admin_freeze(State(state): State<Arc<ApiState>>, headers: HeaderMap) -> ApiResult<Value> {
    admin(&state, &headers)?;
    state.service.freeze()?;
    Ok(Json(json!({"frozen": true})))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportBody {
    pub dataset: Dataset,
    pub report: MetricsReport,
}

async fn admin_export(State(state): State<Arc<ApiState>>, headers: HeaderMap) -> ApiResult<ExportBody> {
    admin(&state, &headers)?;
    let dataset = state.service.dataset()?;
    let report = analysis::analyze(&dataset, &state.relatedness)?;
    Ok(Json(ExportBody { dataset, report }))
}

async fn unknown_api() -> ApiError {
    ApiError(Error::NotFound("no such endpoint".into()))
}

pub fn router(state: Arc<ApiState>, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/attributes", get(catalog))
        .route("/api/assignments/{token}", get(assignments))
        .route("/api/tasks/{token}/scoring", get(scoring_task))
        .route("/api/tasks/{token}/selection", get(selection_task))
        .route("/api/scores", post(post_score))
        .route("/api/selections", post(post_selection))
        .route("/api/admin/sample", post(admin_sample))
        .route("/api/admin/assign", post(admin_assign))
        .route("/api/admin/freeze", post(admin_freeze))
        .route("/api/admin/export", get(admin_export))
        .route("/api/{*rest}", get(unknown_api).post(unknown_api))
        .with_state(state);
    match assets {
        Some(dir) if dir.is_dir() => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        _ => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<ApiState>, addr: SocketAddr, assets: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, assets))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
