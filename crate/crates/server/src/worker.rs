//! Single-consumer background worker: runs queued jobs and periodically
//! releases stale claims.

use std::sync::Arc;
use std::time::Duration;

use scriptorium_core::{Error, JobRecord, Platform};
use tokio::sync::watch;

/// Fetches manifest documents over http(s) with a timeout, a redirect limit
/// and a size cap.
#[derive(Debug, Clone)]
pub struct Fetcher {
    client: reqwest::Client,
    max_bytes: usize,
}

impl Fetcher {
    pub fn new(timeout: Duration, max_bytes: usize) -> Self {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .redirect(reqwest::redirect::Policy::limited(3))
            .user_agent(concat!("scriptorium/", env!("CARGO_PKG_VERSION")))
            .build()
            .expect("static client configuration is valid");
        Self { client, max_bytes }
    }

    pub async fn fetch(&self, url: &str) -> Result<String, String> {
        let parsed = reqwest::Url::parse(url).map_err(|e| format!("invalid url: {e}"))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(format!("unsupported scheme {:?}", parsed.scheme()));
        }
        let mut response = self.client.get(parsed).send().await.map_err(|e| format!("fetch failed: {e}"))?;
        if !response.status().is_success() {
            return Err(format!("fetch failed: HTTP {}", response.status()));
        }
        let mut body = Vec::new();
        while let Some(chunk) = response.chunk().await.map_err(|e| format!("fetch failed: {e}"))? {
            if body.len() + chunk.len() > self.max_bytes {
                return Err(format!("manifest exceeds {} bytes", self.max_bytes));
            }
            body.extend_from_slice(&chunk);
        }
        String::from_utf8(body).map_err(|_| "manifest is not UTF-8".to_string())
    }
}

/// Claims and runs the oldest queued job, if any.
///
/// Storage errors propagate and leave the job running; it is requeued when
/// the platform next starts.
pub async fn run_next(platform: &Arc<Platform>, fetcher: &Fetcher) -> Result<Option<JobRecord>, Error> {
    let p = Arc::clone(platform);
    let Some(job) = blocking(move || p.claim_next_job()).await? else {
        return Ok(None);
    };
    let fetched = match job.payload.fetch_url() {
        Some(url) => match fetcher.fetch(url).await {
            Ok(doc) => Some(doc),
            Err(message) => {
                let p = Arc::clone(platform);
                return blocking(move || p.fail_job(job.job_id, &message)).await.map(Some);
            }
        },
        None => None,
    };
    let p = Arc::clone(platform);
    let done = blocking(move || p.run_job(job.job_id, fetched.as_deref())).await?;
    tracing::info!(job = %done.job_id, kind = ?done.kind, state = ?done.state, "job finished");
    Ok(Some(done))
}

/// Runs queued jobs until the queue is empty; returns how many ran.
pub async fn drain(platform: &Arc<Platform>, fetcher: &Fetcher) -> Result<usize, Error> {
    let mut n = 0;
    while run_next(platform, fetcher).await?.is_some() {
        n += 1;
    }
    Ok(n)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, Error> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(Error::StorageUnavailable(format!("worker task failed: {e}"))))
}

/// Polls the queue every `interval` and sweeps stale claims every `sweep`,
/// until `shutdown` turns true.
pub async fn run(
    platform: Arc<Platform>,
    fetcher: Fetcher,
    interval: Duration,
    sweep: Duration,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut poll = tokio::time::interval(interval);
    let mut sweeper = tokio::time::interval(sweep);
    loop {
        tokio::select! {
            _ = shutdown.changed() => {
                if *shutdown.borrow() {
                    break;
                }
            }
            _ = poll.tick() => {
                if let Err(e) = drain(&platform, &fetcher).await {
                    tracing::warn!("job worker: {e}");
                }
            }
            _ = sweeper.tick() => {
                let p = Arc::clone(&platform);
                match blocking(move || p.release_all_stale(p.now())).await {
                    Ok(0) => {}
                    Ok(n) => tracing::info!(released = n, "released stale claims"),
                    Err(e) => tracing::warn!("stale sweep: {e}"),
                }
            }
        }
    }
}
