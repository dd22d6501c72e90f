use axum::extract::State;
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::Json;
use scriptorium_core::{ExportFormat, JobId, JobRecord, ProjectId};

use crate::error::ApiResult;
use crate::extract::{paginate, CurrentUser, Id, Page, PageQuery, Q};
use crate::AppState;

pub async fn get(State(s): State<AppState>, user: CurrentUser, Id(id): Id<JobId>) -> ApiResult<Json<JobRecord>> {
    Ok(Json(s.platform.job(user.user_id, id)?))
}

pub async fn of_project(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(id): Id<ProjectId>,
    Q(q): Q<PageQuery>,
) -> ApiResult<Json<Page<JobRecord>>> {
    let all = s.platform.jobs_of(user.user_id, id)?;
    Ok(Json(paginate(all, &q, |j| j.job_id.0)?))
}

/// The file produced by a finished export job.
pub async fn download(State(s): State<AppState>, user: CurrentUser, Id(id): Id<JobId>) -> ApiResult<Response> {
    let artifact = s.platform.export_artifact(user.user_id, id)?;
    let extension = match artifact.format {
        ExportFormat::Csv => "csv",
        ExportFormat::Json => "json",
    };
    let disposition = format!("attachment; filename=\"campaign-{}.{extension}\"", artifact.campaign_id);
    Ok((
        [
            (header::CONTENT_TYPE, artifact.format.content_type().to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        artifact.body,
    )
        .into_response())
}
