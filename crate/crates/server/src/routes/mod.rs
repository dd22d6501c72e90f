//! The `/api/v1` route table.

mod auth;
mod campaigns;
mod jobs;
mod projects;
mod tasks;

use axum::routing::{get, patch, post, put};
use axum::Router;

use crate::error::ApiError;
use crate::AppState;

pub fn api() -> Router<AppState> {
    Router::new()
        .route("/auth/register", post(auth::register))
        .route("/auth/login", post(auth::login))
        .route("/auth/logout", post(auth::logout))
        .route("/auth/tokens", post(auth::issue_token))
        .route("/auth/me", get(auth::me))
        .route("/users/{id}", patch(auth::set_active))
        .route("/projects", post(projects::create).get(projects::list))
        .route("/projects/{id}", get(projects::get))
        .route("/projects/{id}/members", get(projects::members))
        .route("/projects/{id}/members/{user}", put(projects::set_role))
        .route("/projects/{id}/join", post(projects::join))
        .route(
            "/projects/{id}/invitation",
            post(projects::rotate_invitation)
                .get(projects::active_invitation)
                .delete(projects::revoke_invitation),
        )
        .route("/projects/{id}/invitation:send", post(projects::send_invitations))
        .route("/invitations/{token}/join", post(projects::join_invitation))
        .route("/projects/{id}/elements:import", post(projects::import_elements))
        .route("/projects/{id}/elements", get(projects::elements))
        .route("/projects/{id}/manifests", post(projects::ingest_manifest))
        .route("/projects/{id}/jobs", get(jobs::of_project))
        .route("/elements/{id}", get(projects::element))
        .route("/elements/{id}/children", get(projects::children))
        .route("/projects/{id}/campaigns", post(campaigns::create).get(campaigns::list))
        .route("/campaigns/{id}", get(campaigns::get).patch(campaigns::update))
        .route("/campaigns/{id}/progress", get(campaigns::progress))
        .route("/campaigns/{id}/agreement", get(campaigns::agreement))
        .route("/campaigns/{id}/timing", get(campaigns::timing))
        .route("/campaigns/{id}/tasks", post(campaigns::create_tasks).get(campaigns::tasks))
        .route("/campaigns/{id}/tasks:publish", post(campaigns::publish))
        .route("/campaigns/{id}/claim", post(campaigns::claim))
        .route("/campaigns/{id}/events", get(campaigns::events))
        .route("/campaigns/{id}/export", post(campaigns::export))
        .route("/campaigns/{id}/release-stale", post(campaigns::release_stale))
        .route("/tasks/{id}", get(tasks::detail))
        .route("/tasks/{id}/annotations", get(tasks::annotations))
        .route("/tasks/{id}/annotation", post(tasks::submit))
        .route("/tasks/{id}/revision", post(tasks::revise))
        .route("/tasks/{id}/skip", post(tasks::skip))
        .route("/tasks/{id}/moderate", post(tasks::moderate))
        .route("/tasks/{id}/comments", post(tasks::comment))
        .route("/tasks/{id}/feedback", post(tasks::feedback))
        .route("/tasks/{id}/republish", post(tasks::republish))
        .route("/jobs/{id}", get(jobs::get))
        .route("/jobs/{id}/download", get(jobs::download))
        .fallback(|| async { ApiError::not_found("no such route") })
}
