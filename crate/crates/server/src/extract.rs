//! Request extractors whose rejections use the API error format, plus
//! cursor pagination.

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request};
use axum::http::header;
use axum::http::request::Parts;
use axum::Json;
use scriptorium_core::{Error, UserId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::AppState;

pub const SESSION_COOKIE: &str = "session";

/// The session token of a request: `Authorization: Bearer …` first, then
/// the session cookie.
pub fn bearer_or_cookie(parts: &Parts) -> Option<String> {
    if let Some(v) = parts.headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()) {
        if let Some(token) = v.strip_prefix("Bearer ") {
            return Some(token.trim().to_string());
        }
    }
    parts
        .headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|pair| pair.trim().split_once('='))
        .find(|(name, _)| *name == SESSION_COOKIE)
        .map(|(_, value)| value.to_string())
}

/// An authenticated caller.
#[derive(Debug, Clone)]
pub struct CurrentUser {
    pub user_id: UserId,
    pub token: String,
}

impl FromRequestParts<AppState> for CurrentUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = bearer_or_cookie(parts).ok_or(Error::Unauthenticated)?;
        let user_id = state.platform.authenticate(&token)?;
        Ok(CurrentUser { user_id, token })
    }
}

/// JSON body. Malformed JSON is a 400; well-formed JSON of the wrong shape
/// is a 422.
#[derive(Debug, Clone)]
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(value)) => Ok(Body(value)),
            Err(JsonRejection::JsonDataError(e)) => Err(ApiError::unprocessable(e.body_text())),
            Err(JsonRejection::MissingJsonContentType(e)) => Err(ApiError::new(
                e.status(),
                "unsupported_media_type",
                "expected `Content-Type: application/json`",
            )),
            Err(e) => Err(ApiError::bad_request(e.body_text())),
        }
    }
}

/// Path parameters. Ids that do not parse name no record, hence 404.
#[derive(Debug, Clone)]
pub struct Id<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Send> FromRequestParts<S> for Id<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Path::<T>::from_request_parts(parts, state)
            .await
            .map(|Path(v)| Id(v))
            .map_err(|e| ApiError::not_found(e.body_text()))
    }
}

/// Query string.
#[derive(Debug, Clone)]
pub struct Q<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Q<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| Q(v))
            .map_err(|e: QueryRejection| ApiError::unprocessable(e.body_text()))
    }
}

pub const DEFAULT_PAGE_SIZE: usize = 100;
pub const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug, Clone, Default, Deserialize)]
pub struct PageQuery {
    #[serde(default)]
    pub cursor: Option<String>,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    /// Pass back as `cursor` to get the next page; absent on the last page.
    pub next_cursor: Option<String>,
}

/// Keyset pagination: `items` are ordered by the strictly increasing `key`,
/// and the cursor is the key of the last item returned.
pub fn paginate<T>(items: Vec<T>, q: &PageQuery, key: impl Fn(&T) -> u64) -> Result<Page<T>, ApiError> {
    let limit = q.limit.unwrap_or(DEFAULT_PAGE_SIZE);
    if !(1..=MAX_PAGE_SIZE).contains(&limit) {
        return Err(ApiError::unprocessable(format!("limit must lie in 1..={MAX_PAGE_SIZE}")));
    }
    let after = match q.cursor.as_deref() {
        None | Some("") => None,
        Some(c) => Some(c.parse::<u64>().map_err(|_| ApiError::unprocessable("malformed cursor"))?),
    };
    let mut rest = items.into_iter().filter(|t| after.is_none_or(|a| key(t) > a)).peekable();
    let page: Vec<T> = rest.by_ref().take(limit).collect();
    let next_cursor = match (rest.peek(), page.last()) {
        (Some(_), Some(last)) => Some(key(last).to_string()),
        _ => None,
    };
    Ok(Page { items: page, next_cursor })
}

/// Pagination over an append-only sequence, keyed by position.
pub fn paginate_positions<T>(items: Vec<T>, q: &PageQuery) -> Result<Page<T>, ApiError> {
    let keyed: Vec<(u64, T)> = items.into_iter().enumerate().map(|(i, t)| (i as u64, t)).collect();
    let page = paginate(keyed, q, |(i, _)| *i)?;
    Ok(Page { items: page.items.into_iter().map(|(_, t)| t).collect(), next_cursor: page.next_cursor })
}
