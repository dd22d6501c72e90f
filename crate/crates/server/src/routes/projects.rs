use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use scriptorium_core::{
    ElementId, ElementRecord, InvitationLink, JobPayload, JobRecord, MemberView, Membership, Project, ProjectId,
    ProjectSummary, Role, UserId, Visibility,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{ApiError, ApiResult};
use crate::extract::{paginate, Body, CurrentUser, Id, Page, PageQuery, Q};
use crate::AppState;

#[derive(Debug, Deserialize)]
pub struct NewProject {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default = "private")]
    visibility: Visibility,
}

fn private() -> Visibility {
    Visibility::Private
}

pub async fn create(
    State(s): State<AppState>,
    user: CurrentUser,
    Body(p): Body<NewProject>,
) -> ApiResult<(StatusCode, Json<Project>)> {
    let project = s.platform.create_project(user.user_id, &p.name, &p.description, p.visibility)?;
    Ok((StatusCode::CREATED, Json(project)))
}

pub async fn list(State(s): State<AppState>, user: CurrentUser, Q(q): Q<PageQuery>) -> ApiResult<Json<Page<ProjectSummary>>> {
    let all = s.platform.list_projects(user.user_id)?;
    Ok(Json(paginate(all, &q, |p| p.project.project_id.0)?))
}

pub async fn get(State(s): State<AppState>, user: CurrentUser, Id(id): Id<ProjectId>) -> ApiResult<Json<Project>> {
    Ok(Json(s.platform.project(user.user_id, id)?))
}

pub async fn members(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<ProjectId>,
    Q(q): Q<PageQuery>,
) -> ApiResult<Json<Page<MemberView>>> {
    let all = s.platform.members(user.user_id, id)?;
    Ok(Json(paginate(all, &q, |m| m.user.user_id.0)?))
}

#[derive(Debug, Deserialize)]
pub struct SetRole {
    role: Role,
}

pub async fn set_role(
    State(s): State<AppState>,
    user: CurrentUser,
    Id((project, target)): Id<(ProjectId, UserId)>,
    Body(b): Body<SetRole>,
) -> ApiResult<Json<Membership>> {
    Ok(Json(s.platform.set_member_role(user.user_id, project, target, b.role)?))
}

/// Self-registration on a public project.
pub async fn join(State(s): State<AppState>, user: CurrentUser, Id(id): Id<ProjectId>) -> ApiResult<Json<Membership>> {
    Ok(Json(s.platform.join_public(id, user.user_id)?))
}

pub async fn rotate_invitation(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<ProjectId>,
) -> ApiResult<(StatusCode, Json<InvitationLink>)> {
    Ok((StatusCode::CREATED, Json(s.platform.rotate_invitation(user.user_id, id)?)))
}

/// The active link, or `null` when there is none.
pub async fn active_invitation(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<ProjectId>,
) -> ApiResult<Json<Option<InvitationLink>>> {
    Ok(Json(s.platform.active_invitation(user.user_id, id)?))
}

pub async fn revoke_invitation(State(s): State<AppState>, user: CurrentUser, Id(id): Id<ProjectId>) -> ApiResult<StatusCode> {
    s.platform.revoke_invitation(user.user_id, id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
pub struct SendInvitations {
    emails: Vec<String>,
}

pub async fn send_invitations(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<ProjectId>,
    Body(b): Body<SendInvitations>,
) -> ApiResult<Json<Value>> {
    let sent = s.platform.send_invitations(user.user_id, id, &b.emails, &s.config.join_url_prefix())?;
    Ok(Json(json!({ "sent": sent })))
}

pub async fn join_invitation(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(token): Id<String>,
) -> ApiResult<Json<Membership>> {
    Ok(Json(s.platform.join_via_invitation(&token, user.user_id)?))
}

#[derive(Debug, Serialize)]
pub struct Imported {
    imported: usize,
    element_ids: Vec<ElementId>,
}

/// Line-delimited JSON, one element per line, all or nothing.
pub async fn import_elements(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<ProjectId>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Imported>)> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(format!("body is not UTF-8: {e}")))?;
    let records = s.platform.import_elements_jsonl(user.user_id, id, text)?;
    let element_ids: Vec<ElementId> = records.iter().map(|e| e.element_id).collect();
    Ok((StatusCode::CREATED, Json(Imported { imported: element_ids.len(), element_ids })))
}

#[derive(Debug, Default, Deserialize)]
pub struct TypeFilter {
    #[serde(default, rename = "type")]
    element_type: Option<String>,
}

pub async fn elements(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<ProjectId>,
    Q(f): Q<TypeFilter>,
    Q(q): Q<PageQuery>,
) -> ApiResult<Json<Page<ElementRecord>>> {
    let mut all = s.platform.elements_of(user.user_id, id, f.element_type.as_deref())?;
    all.sort_by_key(|e| e.element_id);
    Ok(Json(paginate(all, &q, |e| e.element_id.0)?))
}

pub async fn element(State(s): State<AppState>, user: CurrentUser, Id(id): Id<ElementId>) -> ApiResult<Json<ElementRecord>> {
    Ok(Json(s.platform.element(user.user_id, id)?))
}

/// Children in reading order; the cursor is the sibling order index.
pub async fn children(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<ElementId>,
    Q(f): Q<TypeFilter>,
    Q(q): Q<PageQuery>,
) -> ApiResult<Json<Page<ElementRecord>>> {
    let all = s.platform.children_of(user.user_id, id, f.element_type.as_deref())?;
    Ok(Json(paginate(all, &q, |e| e.order_index as u64)?))
}

#[derive(Debug, Deserialize)]
pub struct IngestRequest {
    /// The manifest itself, as a JSON object or a string.
    #[serde(default)]
    document: Option<Value>,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    page_type: Option<String>,
}

/// Queues a manifest ingestion job.
pub async fn ingest_manifest(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<ProjectId>,
    Body(r): Body<IngestRequest>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let document = r.document.map(|d| match d {
        Value::String(text) => text,
        other => other.to_string(),
    });
    let payload = JobPayload::IngestManifest {
        document,
        url: r.url,
        page_type: r.page_type.unwrap_or_else(|| "page".to_string()),
    };
    Ok((StatusCode::ACCEPTED, Json(s.platform.enqueue_job(user.user_id, id, payload)?)))
}
