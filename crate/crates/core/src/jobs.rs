//! Background jobs: manifest ingestion, stale-claim release and exports.
//!
//! A job's effects and its completion are committed in one write, so a
//! crash leaves either both or neither. Jobs found `running` at startup
//! were interrupted and go back to `queued`.

use serde::{Deserialize, Serialize};

use chrono::{DateTime, Utc};

use crate::domain::{require, Action};
use crate::error::{EntityKind, Error, Result};
use crate::export::{document_in, table_in, ExportOptions};
use crate::iiif::{ingest_in, ManifestError};
use crate::ids::{CampaignId, JobId, ProjectId, UserId};
use crate::platform::Platform;
use crate::store::State;
use crate::tasks::{campaign_in, release_stale_in};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    IngestManifest,
    Export,
    ReleaseStale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Csv => "text/csv; charset=utf-8",
            ExportFormat::Json => "application/json",
        }
    }
}

/// What a job does. Manifest ingestion takes either an uploaded document or
/// a URL that the worker fetches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobPayload {
    IngestManifest {
        #[serde(default)]
        document: Option<String>,
        #[serde(default)]
        url: Option<String>,
        #[serde(default = "default_page_type")]
        page_type: String,
    },
    Export {
        campaign: CampaignId,
        format: ExportFormat,
        #[serde(default)]
        options: ExportOptions,
    },
    ReleaseStale {
        campaign: CampaignId,
    },
}

fn default_page_type() -> String {
    "page".to_string()
}

impl JobPayload {
    pub fn kind(&self) -> JobKind {
        match self {
            JobPayload::IngestManifest { .. } => JobKind::IngestManifest,
            JobPayload::Export { .. } => JobKind::Export,
            JobPayload::ReleaseStale { .. } => JobKind::ReleaseStale,
        }
    }

    fn action(&self) -> Action {
        match self {
            JobPayload::IngestManifest { .. } => Action::ImportElements,
            JobPayload::Export { .. } => Action::Export,
            JobPayload::ReleaseStale { .. } => Action::ReleaseStale,
        }
    }

    fn campaign(&self) -> Option<CampaignId> {
        match self {
            JobPayload::IngestManifest { .. } => None,
            JobPayload::Export { campaign, .. } | JobPayload::ReleaseStale { campaign } => Some(*campaign),
        }
    }

    /// URL the worker must fetch before running the job.
    pub fn fetch_url(&self) -> Option<&str> {
        match self {
            JobPayload::IngestManifest { document: None, url: Some(url), .. } => Some(url),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JobResult {
    Ingested { elements: usize },
    Exported { rows: usize, bytes: usize },
    Released { tasks: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: JobId,
    pub project_id: ProjectId,
    pub kind: JobKind,
    pub state: JobState,
    pub payload: JobPayload,
    /// Present once done; exports are downloaded by job id.
    pub result: Option<JobResult>,
    pub error: Option<String>,
    pub created_by: UserId,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportArtifact {
    pub job_id: JobId,
    pub campaign_id: CampaignId,
    pub format: ExportFormat,
    pub body: String,
}

pub(crate) fn requeue_interrupted(st: &mut State) {
    for job in st.jobs.values_mut() {
        if job.state == JobState::Running {
            job.state = JobState::Queued;
        }
    }
}

fn job_in(st: &State, job: JobId) -> Result<&JobRecord> {
    st.jobs.get(&job).ok_or_else(|| Error::not_found(EntityKind::Job, job))
}

/// Applies the job's effects to `st`. Errors leave `st` untouched.
fn execute(st: &mut State, job: &JobRecord, fetched: Option<&str>, now: DateTime<Utc>) -> Result<(JobResult, Option<ExportArtifact>)> {
    require(st, job.project_id, job.created_by, job.payload.action())?;
    match &job.payload {
        JobPayload::IngestManifest { document, page_type, .. } => {
            let doc = document
                .as_deref()
                .or(fetched)
                .ok_or_else(|| ManifestError::Fetch("no manifest document available".into()))?;
            let created = ingest_in(st, job.project_id, doc, page_type)?;
            Ok((JobResult::Ingested { elements: created.len() }, None))
        }
        JobPayload::ReleaseStale { campaign } => {
            let ttl = campaign_in(st, *campaign)?.release_ttl();
            Ok((JobResult::Released { tasks: release_stale_in(st, *campaign, ttl, now) }, None))
        }
        JobPayload::Export { campaign, format, options } => {
            let (rows, body) = match format {
                ExportFormat::Csv => {
                    let table = table_in(st, *campaign, options)?;
                    (table.rows.len(), table.to_csv())
                }
                ExportFormat::Json => {
                    let doc = document_in(st, *campaign, &options.statuses)?;
                    let body = serde_json::to_string_pretty(&doc).map_err(|e| Error::Validation(e.to_string()))?;
                    (doc.tasks.len(), body)
                }
            };
            let artifact = ExportArtifact { job_id: job.job_id, campaign_id: *campaign, format: *format, body };
            Ok((JobResult::Exported { rows, bytes: artifact.body.len() }, Some(artifact)))
        }
    }
}

impl Platform {
    pub fn enqueue_job(&self, actor: UserId, project: ProjectId, payload: JobPayload) -> Result<JobRecord> {
        if let JobPayload::IngestManifest { document, url, page_type } = &payload {
            if document.is_some() == url.is_some() {
                return Err(Error::Validation("give exactly one of `document` and `url`".into()));
            }
            if page_type.trim().is_empty() {
                return Err(Error::Validation("page_type must not be empty".into()));
            }
            if let Some(u) = url {
                url::Url::parse(u).map_err(|e| Error::Validation(format!("invalid manifest url: {e}")))?;
            }
        }
        let now = self.now();
        self.write(|st| {
            require(st, project, actor, payload.action())?;
            if let Some(c) = payload.campaign() {
                if campaign_in(st, c)?.project_id != project {
                    return Err(Error::not_found(EntityKind::Campaign, c));
                }
            }
            let job = JobRecord {
                job_id: st.ids.next_job(),
                project_id: project,
                kind: payload.kind(),
                state: JobState::Queued,
                payload,
                result: None,
                error: None,
                created_by: actor,
                created_at: now,
                finished_at: None,
                attempts: 0,
            };
            st.jobs.insert(job.job_id, job.clone());
            Ok(job)
        })
    }

    pub fn job(&self, actor: UserId, job: JobId) -> Result<JobRecord> {
        self.read(|st| {
            let j = job_in(st, job)?;
            require(st, j.project_id, actor, Action::ViewProject)?;
            Ok(j.clone())
        })
    }

    pub fn jobs_of(&self, actor: UserId, project: ProjectId) -> Result<Vec<JobRecord>> {
        self.read(|st| {
            require(st, project, actor, Action::ViewProject)?;
            Ok(st.jobs.values().filter(|j| j.project_id == project).cloned().collect())
        })
    }

    /// Marks the oldest queued job as running and returns it.
    pub fn claim_next_job(&self) -> Result<Option<JobRecord>> {
        self.write(|st| {
            let Some(job) = st.jobs.values_mut().find(|j| j.state == JobState::Queued) else {
                return Ok(None);
            };
            job.state = JobState::Running;
            job.attempts += 1;
            Ok(Some(job.clone()))
        })
    }

    /// Runs a claimed job. Domain failures mark the job failed; storage
    /// failures propagate and leave it running, to be requeued on restart.
    pub fn run_job(&self, job: JobId, fetched: Option<&str>) -> Result<JobRecord> {
        let now = self.now();
        self.write(|st| {
            let record = job_in(st, job)?.clone();
            if record.state != JobState::Running {
                return Err(Error::Validation(format!("job {job} is not running")));
            }
            let outcome = execute(st, &record, fetched, now);
            let j = st.jobs.get_mut(&job).expect("checked above");
            j.finished_at = Some(now);
            match outcome {
                Ok((result, artifact)) => {
                    j.state = JobState::Done;
                    j.result = Some(result);
                    let out = j.clone();
                    if let Some(a) = artifact {
                        st.artifacts.insert(job, a);
                    }
                    Ok(out)
                }
                Err(e) => {
                    j.state = JobState::Failed;
                    j.error = Some(e.to_string());
                    Ok(j.clone())
                }
            }
        })
    }

    /// Marks a running job failed, e.g. after a fetch error.
    pub fn fail_job(&self, job: JobId, message: &str) -> Result<JobRecord> {
        let now = self.now();
        self.write(|st| {
            job_in(st, job)?;
            let j = st.jobs.get_mut(&job).expect("checked above");
            j.state = JobState::Failed;
            j.error = Some(message.to_string());
            j.finished_at = Some(now);
            Ok(j.clone())
        })
    }

    /// Claims and runs queued jobs until none remain. `fetch` resolves
    /// manifest URLs. Returns the number of jobs processed.
    pub fn drain_jobs(&self, mut fetch: impl FnMut(&str) -> std::result::Result<String, String>) -> Result<usize> {
        let mut n = 0;
        while let Some(job) = self.claim_next_job()? {
            match job.payload.fetch_url() {
                Some(url) => match fetch(url) {
                    Ok(doc) => self.run_job(job.job_id, Some(&doc))?,
                    Err(msg) => self.fail_job(job.job_id, &msg)?,
                },
                None => self.run_job(job.job_id, None)?,
            };
            n += 1;
        }
        Ok(n)
    }

    pub fn export_artifact(&self, actor: UserId, job: JobId) -> Result<ExportArtifact> {
        self.read(|st| {
            let j = job_in(st, job)?;
            require(st, j.project_id, actor, Action::Export)?;
            st.artifacts
                .get(&job)
                .cloned()
                .ok_or_else(|| Error::not_found(EntityKind::Export, job))
        })
    }
}
