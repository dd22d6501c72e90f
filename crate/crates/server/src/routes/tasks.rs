use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use scriptorium_core::{
    Annotation, AnnotationPayload, CommentRecord, Feedback, ModerationDecision, TaskDetail, TaskId, TaskRecord,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiResult;
use crate::extract::{paginate, Body, CurrentUser, Id, Page, PageQuery, Q};
use crate::AppState;

pub async fn detail(State(s): State<AppState>, user: CurrentUser, Id(id): Id<TaskId>) -> ApiResult<Json<TaskDetail>> {
    Ok(Json(s.platform.task_detail(user.user_id, id)?))
}

/// Every annotation of the task, superseded ones included.
pub async fn annotations(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<TaskId>,
    Q(q): Q<PageQuery>,
) -> ApiResult<Json<Page<Annotation>>> {
    let all = s.platform.annotations_of(user.user_id, id)?;
    Ok(Json(paginate(all, &q, |a| a.annotation_id.0)?))
}

pub async fn submit(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<TaskId>,
    Body(payload): Body<AnnotationPayload>,
) -> ApiResult<Json<TaskRecord>> {
    Ok(Json(s.platform.submit_annotation(id, user.user_id, payload)?))
}

pub async fn revise(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<TaskId>,
    Body(payload): Body<AnnotationPayload>,
) -> ApiResult<(StatusCode, Json<Annotation>)> {
    Ok((StatusCode::CREATED, Json(s.platform.revise_annotation(id, user.user_id, payload)?)))
}

pub async fn skip(State(s): State<AppState>, user: CurrentUser, Id(id): Id<TaskId>) -> ApiResult<Json<TaskRecord>> {
    Ok(Json(s.platform.skip_task(id, user.user_id)?))
}

#[derive(Debug, Deserialize)]
pub struct Moderate {
    decision: ModerationDecision,
    #[serde(default)]
    note: Option<String>,
}

pub async fn moderate(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<TaskId>,
    Body(m): Body<Moderate>,
) -> ApiResult<Json<TaskRecord>> {
    Ok(Json(s.platform.moderate(id, user.user_id, m.decision, m.note.as_deref())?))
}

#[derive(Debug, Deserialize)]
pub struct NewComment {
    body: String,
}

#[derive(Debug, Serialize)]
pub struct Commented {
    comment: CommentRecord,
    task: TaskRecord,
}

pub async fn comment(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<TaskId>,
    Body(c): Body<NewComment>,
) -> ApiResult<(StatusCode, Json<Commented>)> {
    let (comment, task) = s.platform.add_comment(id, user.user_id, &c.body)?;
    Ok((StatusCode::CREATED, Json(Commented { comment, task })))
}

#[derive(Debug, Deserialize)]
pub struct SetFeedback {
    feedback: Feedback,
}

pub async fn feedback(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<TaskId>,
    Body(f): Body<SetFeedback>,
) -> ApiResult<Json<TaskRecord>> {
    Ok(Json(s.platform.set_feedback(id, user.user_id, f.feedback)?))
}

/// Manager-only: returns a skipped task to the pool.
pub async fn republish(State(s): State<AppState>, user: CurrentUser, Id(id): Id<TaskId>) -> ApiResult<Json<TaskRecord>> {
    Ok(Json(s.platform.republish_task(user.user_id, id)?))
}
