//! HTTP API, background worker and configuration for the annotation
//! platform. Everything is served under `/api/v1`; see [`app`].

pub mod config;
pub mod error;
pub mod extract;
pub mod routes;
pub mod worker;

use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::Router;
use scriptorium_core::{FileStorage, JsonlFileSink, LogSink, NotificationSink, Platform};
use tower::limit::GlobalConcurrencyLimitLayer;

pub use config::Config;

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    pub config: Arc<Config>,
}

impl AppState {
    pub fn new(platform: Arc<Platform>, config: Config) -> Self {
        Self { platform, config: Arc::new(config) }
    }
}

/// Opens the platform described by the configuration.
pub fn open_platform(config: &Config) -> scriptorium_core::Result<Platform> {
    let notifier: Arc<dyn NotificationSink> = match &config.notify_log {
        Some(path) => Arc::new(JsonlFileSink::new(path)),
        None => Arc::new(LogSink),
    };
    let builder = Platform::builder().settings(config.settings()).notifier(notifier);
    match &config.storage {
        Some(path) => builder.storage(FileStorage::new(path)).build(),
        None => builder.build(),
    }
}

/// The complete HTTP application.
pub fn app(state: AppState) -> Router {
    let max_body = state.config.max_body_bytes;
    let max_requests = state.config.max_concurrent_requests;
    Router::new()
        .nest("/api/v1", routes::api())
        .fallback(|| async { error::ApiError::not_found("no such route") })
        .layer(DefaultBodyLimit::max(max_body))
        .layer(GlobalConcurrencyLimitLayer::new(max_requests))
        .with_state(state)
}
