use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use scriptorium_core::{SessionToken, UserId, UserProfile};
use serde::Deserialize;

use crate::error::ApiResult;
use crate::extract::{Body, CurrentUser, Id, SESSION_COOKIE};
use crate::AppState;

#[derive(Debug, Deserialize)]
pub struct Register {
    email: String,
    #[serde(default)]
    display_name: String,
    password: String,
}

/// Self-registration. Staff accounts are created from the CLI only.
pub async fn register(State(s): State<AppState>, Body(r): Body<Register>) -> ApiResult<(StatusCode, Json<UserProfile>)> {
    let profile = s.platform.register_user(&r.email, &r.display_name, &r.password, false)?;
    Ok((StatusCode::CREATED, Json(profile)))
}

#[derive(Debug, Deserialize)]
pub struct Login {
    email: String,
    password: String,
}

fn session_cookie(s: &AppState, value: &str, max_age: i64) -> String {
    let secure = if s.config.secure_cookies() { "; Secure" } else { "" };
    format!("{SESSION_COOKIE}={value}; Path=/; HttpOnly; SameSite=Lax; Max-Age={max_age}{secure}")
}

/// Returns the session token and also sets it as an http-only cookie.
pub async fn login(State(s): State<AppState>, Body(l): Body<Login>) -> ApiResult<Response> {
    let token = s.platform.login(&l.email, &l.password)?;
    let max_age = (token.expires_at - s.platform.now()).num_seconds().max(0);
    let cookie = session_cookie(&s, &token.token, max_age);
    Ok(([(header::SET_COOKIE, cookie)], Json(token)).into_response())
}

pub async fn logout(State(s): State<AppState>, user: CurrentUser) -> ApiResult<Response> {
    s.platform.logout(&user.token)?;
    let cookie = session_cookie(&s, "", 0);
    Ok((StatusCode::NO_CONTENT, [(header::SET_COOKIE, cookie)]).into_response())
}

/// Long-lived token for scripted import and export.
pub async fn issue_token(State(s): State<AppState>, user: CurrentUser) -> ApiResult<(StatusCode, Json<SessionToken>)> {
    Ok((StatusCode::CREATED, Json(s.platform.issue_api_token(user.user_id)?)))
}

pub async fn me(State(s): State<AppState>, user: CurrentUser) -> ApiResult<Json<UserProfile>> {
    Ok(Json(s.platform.user_profile(user.user_id)?))
}

#[derive(Debug, Deserialize)]
pub struct SetActive {
    active: bool,
}

/// Staff-only account (de)activation.
pub async fn set_active(
    State(s): State<AppState>,
    user: CurrentUser,
    Id(target): Id<UserId>,
    Body(b): Body<SetActive>,
) -> ApiResult<Json<UserProfile>> {
    Ok(Json(s.platform.set_user_active(user.user_id, target, b.active)?))
}
