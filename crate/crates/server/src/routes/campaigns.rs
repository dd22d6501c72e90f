use std::collections::{BTreeMap, BTreeSet};

use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use scriptorium_core::{
    AgreementReport, AnnotationPayload, Campaign, CampaignId, CampaignPatch, ClaimStrategy, ElementId, ExportFormat,
    ExportOptions, JobPayload, JobRecord, NewCampaign, ProgressReport, ProjectId, TaskEvent, TaskFilter, TaskId,
    TaskRecord, TaskStatus, TimingReport,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{ApiError, ApiResult};
use crate::extract::{paginate, paginate_positions, Body, CurrentUser, Id, Page, PageQuery, Q};
use crate::AppState;

pub async fn create(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(project): Id<ProjectId>,
    Body(new): Body<NewCampaign>,
) -> ApiResult<(StatusCode, Json<Campaign>)> {
    Ok((StatusCode::CREATED, Json(s.platform.create_campaign(user.user_id, project, new)?)))
}

pub async fn list(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(project): Id<ProjectId>,
    Q(q): Q<PageQuery>,
) -> ApiResult<Json<Page<Campaign>>> {
    let all = s.platform.campaigns_of(user.user_id, project)?;
    Ok(Json(paginate(all, &q, |c| c.campaign_id.0)?))
}

pub async fn get(State(s): State<AppState>, user: CurrentUser, Id(id): Id<CampaignId>) -> ApiResult<Json<Campaign>> {
    Ok(Json(s.platform.campaign(user.user_id, id)?))
}

pub async fn update(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
    Body(patch): Body<CampaignPatch>,
) -> ApiResult<Json<Campaign>> {
    Ok(Json(s.platform.update_campaign(user.user_id, id, patch)?))
}

pub async fn progress(State(s): State<AppState>, user: CurrentUser, Id(id): Id<CampaignId>) -> ApiResult<Json<ProgressReport>> {
    Ok(Json(s.platform.progress(user.user_id, id)?))
}

pub async fn agreement(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
) -> ApiResult<Json<AgreementReport>> {
    Ok(Json(s.platform.agreement(user.user_id, id)?))
}

#[derive(Debug, Default, Deserialize)]
pub struct TimingQuery {
    /// `with`, `without` or `all` (default): tasks with or without a prefill.
    #[serde(default)]
    prefill: Option<String>,
}

pub async fn timing(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
    Q(t): Q<TimingQuery>,
) -> ApiResult<Json<TimingReport>> {
    let filter = match t.prefill.as_deref() {
        None | Some("all") => None,
        Some("with") => Some(true),
        Some("without") => Some(false),
        Some(other) => return Err(ApiError::unprocessable(format!("prefill must be with, without or all, not {other:?}"))),
    };
    Ok(Json(s.platform.annotation_timing(user.user_id, id, filter)?))
}

#[derive(Debug, Deserialize)]
pub struct CreateTasks {
    elements: Vec<ElementId>,
    /// Model predictions keyed by element id.
    #[serde(default)]
    prefills: BTreeMap<ElementId, AnnotationPayload>,
}

pub async fn create_tasks(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
    Body(b): Body<CreateTasks>,
) -> ApiResult<(StatusCode, Json<Vec<TaskRecord>>)> {
    let tasks = s.platform.create_tasks(user.user_id, id, &b.elements, &b.prefills)?;
    Ok((StatusCode::CREATED, Json(tasks)))
}

pub async fn tasks(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
    Q(filter): Q<TaskFilter>,
    Q(q): Q<PageQuery>,
) -> ApiResult<Json<Page<TaskRecord>>> {
    let all = s.platform.filter_tasks(user.user_id, id, &filter)?;
    Ok(Json(paginate(all, &q, |t| t.task_id.0)?))
}

#[derive(Debug, Default, Deserialize)]
pub struct Publish {
    /// Every draft task of the campaign when absent.
    #[serde(default)]
    task_ids: Option<Vec<TaskId>>,
}

pub async fn publish(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
    Body(b): Body<Publish>,
) -> ApiResult<Json<Value>> {
    let published = match b.task_ids {
        Some(ids) => s.platform.publish_tasks(user.user_id, id, &ids)?,
        None => s.platform.publish_all(user.user_id, id)?,
    };
    Ok(Json(json!({ "published": published })))
}

#[derive(Debug, Deserialize)]
pub struct Claim {
    #[serde(default = "sequential")]
    strategy: ClaimStrategy,
}

fn sequential() -> ClaimStrategy {
    ClaimStrategy::Sequential
}

/// An exhausted pool answers 200 with an empty list.
pub async fn claim(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
    Body(b): Body<Claim>,
) -> ApiResult<Json<Vec<TaskRecord>>> {
    Ok(Json(s.platform.claim_batch(id, user.user_id, b.strategy)?))
}

pub async fn events(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
    Q(q): Q<PageQuery>,
) -> ApiResult<Json<Page<TaskEvent>>> {
    Ok(Json(paginate_positions(s.platform.task_events(user.user_id, id)?, &q)?))
}

#[derive(Debug, Deserialize)]
pub struct ExportRequest {
    format: ExportFormat,
    #[serde(default)]
    statuses: Option<BTreeSet<TaskStatus>>,
    #[serde(default)]
    include_superseded: bool,
}

/// Queues an export job; the file is fetched from `/jobs/{id}/download`.
pub async fn export(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
    Body(r): Body<ExportRequest>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let project = s.platform.campaign(user.user_id, id)?.project_id;
    let mut options = ExportOptions { include_superseded: r.include_superseded, ..ExportOptions::default() };
    if let Some(statuses) = r.statuses {
        options.statuses = statuses;
    }
    let payload = JobPayload::Export { campaign: id, format: r.format, options };
    Ok((StatusCode::ACCEPTED, Json(s.platform.enqueue_job(user.user_id, project, payload)?)))
}

/// Queues a release of claims older than the campaign's ttl.
pub async fn release_stale(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<CampaignId>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let project = s.platform.campaign(user.user_id, id)?.project_id;
    let payload = JobPayload::ReleaseStale { campaign: id };
    Ok((StatusCode::ACCEPTED, Json(s.platform.enqueue_job(user.user_id, project, payload)?)))
}
