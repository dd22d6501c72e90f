//! Campaigns and the task lifecycle.
//!
//! ```text
//! draft ──publish──▶ pending ──submit──▶ annotated ──validate──▶ validated
//!                      │  ▲                 │  ▲
//!                    skip │ republish    reject │ revise
//!                      ▼  │ (manager)       ▼  │
//!                    skipped              rejected
//! ```
//!
//! Claiming does not change the status: a claimed task is a pending task with
//! an assignee. Claims and submissions are decided under the platform write
//! lock, so each task is handed to at most one user.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, TimeDelta, Utc};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::{require, Action};
use crate::elements::{children_of_in, element_in, ElementRecord};
use crate::error::{EntityKind, Error, Result};
use crate::ids::{AnnotationId, CampaignId, CommentId, DupGroupId, ElementId, ProjectId, TaskId, UserId};
use crate::modes::{validate_config, validate_payload, AnnotationPayload, ElementContext, ModeConfig, ModeKind};
use crate::notify::Notification;
use crate::platform::Platform;
use crate::store::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignState {
    Draft,
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: CampaignId,
    pub project_id: ProjectId,
    pub name: String,
    pub mode: ModeKind,
    pub config: ModeConfig,
    /// Annotation guide, markdown.
    pub guide: String,
    pub state: CampaignState,
    pub batch_size: u32,
    pub duplication_factor: u32,
    pub duplication_fraction: f64,
    pub release_ttl_secs: u64,
    pub context_margin: f64,
    pub created_at: DateTime<Utc>,
}

impl Campaign {
    pub fn release_ttl(&self) -> TimeDelta {
        TimeDelta::seconds(self.release_ttl_secs as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewCampaign {
    pub name: String,
    pub mode: ModeKind,
    pub config: ModeConfig,
    #[serde(default)]
    pub guide: String,
    #[serde(default = "one")]
    pub batch_size: u32,
    #[serde(default = "one")]
    pub duplication_factor: u32,
    #[serde(default)]
    pub duplication_fraction: f64,
    #[serde(default)]
    pub release_ttl_secs: Option<u64>,
    #[serde(default)]
    pub context_margin: Option<f64>,
}

fn one() -> u32 {
    1
}

impl NewCampaign {
    pub fn new(name: impl Into<String>, config: ModeConfig) -> Self {
        Self {
            name: name.into(),
            mode: config.kind(),
            config,
            guide: String::new(),
            batch_size: 1,
            duplication_factor: 1,
            duplication_fraction: 0.0,
            release_ttl_secs: None,
            context_margin: None,
        }
    }

    pub fn batch_size(mut self, n: u32) -> Self {
        self.batch_size = n;
        self
    }

    pub fn duplication(mut self, factor: u32, fraction: f64) -> Self {
        self.duplication_factor = factor;
        self.duplication_fraction = fraction;
        self
    }

    pub fn guide(mut self, guide: impl Into<String>) -> Self {
        self.guide = guide.into();
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignPatch {
    #[serde(default)]
    pub state: Option<CampaignState>,
    #[serde(default)]
    pub guide: Option<String>,
    #[serde(default)]
    pub batch_size: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Draft,
    Pending,
    Annotated,
    Validated,
    Rejected,
    Skipped,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 6] = [
        TaskStatus::Draft,
        TaskStatus::Pending,
        TaskStatus::Annotated,
        TaskStatus::Validated,
        TaskStatus::Rejected,
        TaskStatus::Skipped,
    ];

    /// Statuses for which a live annotation exists.
    pub fn has_annotation(self) -> bool {
        matches!(self, TaskStatus::Annotated | TaskStatus::Validated | TaskStatus::Rejected)
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskStatus::Draft => "draft",
            TaskStatus::Pending => "pending",
            TaskStatus::Annotated => "annotated",
            TaskStatus::Validated => "validated",
            TaskStatus::Rejected => "rejected",
            TaskStatus::Skipped => "skipped",
        })
    }
}

/// Operations that move a task between statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Publish,
    Submit,
    Skip,
    Validate,
    Reject,
    Revise,
    /// Manager-only: a skipped task goes back to the pool.
    Republish,
}

impl Transition {
    pub const ALL: [Transition; 7] = [
        Transition::Publish,
        Transition::Submit,
        Transition::Skip,
        Transition::Validate,
        Transition::Reject,
        Transition::Revise,
        Transition::Republish,
    ];

    /// The status reached from `from`, or `IllegalTransition`.
    ///
    /// Revising an annotated task is an in-place edit handled by
    /// [`Platform::revise_annotation`], not a status transition.
    pub fn apply(self, from: TaskStatus) -> Result<TaskStatus> {
        use TaskStatus::*;
        use Transition::*;
        match (self, from) {
            (Publish, Draft) => Ok(Pending),
            (Submit, Pending) => Ok(Annotated),
            (Skip, Pending) => Ok(Skipped),
            (Validate, Annotated) => Ok(Validated),
            (Reject, Annotated) => Ok(Rejected),
            (Revise, Rejected) => Ok(Annotated),
            (Republish, Skipped) => Ok(Pending),
            (transition, from) => Err(Error::IllegalTransition { from, transition }),
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transition::Publish => "publish",
            Transition::Submit => "submit",
            Transition::Skip => "skip",
            Transition::Validate => "validate",
            Transition::Reject => "reject",
            Transition::Revise => "revise",
            Transition::Republish => "republish",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    None,
    Commented,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub campaign_id: CampaignId,
    pub element_id: ElementId,
    pub status: TaskStatus,
    pub assignee: Option<UserId>,
    pub feedback: Feedback,
    /// Model prediction served as the initial form state. Never an annotation.
    pub prefill: Option<AnnotationPayload>,
    pub dup_group: Option<DupGroupId>,
    pub claimed_at: Option<DateTime<Utc>>,
    pub annotated_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: AnnotationId,
    pub task_id: TaskId,
    pub author: UserId,
    pub payload: AnnotationPayload,
    pub created_at: DateTime<Utc>,
    pub superseded_by: Option<AnnotationId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: CommentId,
    pub task_id: TaskId,
    pub author: UserId,
    pub body: String,
    pub created_at: DateTime<Utc>,
}

/// One entry of the transition log. `from` is absent for task creation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEvent {
    pub task_id: TaskId,
    pub campaign_id: CampaignId,
    pub from: Option<TaskStatus>,
    pub to: TaskStatus,
    pub actor: Option<UserId>,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStrategy {
    /// Ascending element `order_index`, then task id.
    Sequential,
    /// Uniform without replacement.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModerationDecision {
    Validate,
    Reject,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFilter {
    #[serde(default)]
    pub status: Option<TaskStatus>,
    #[serde(default)]
    pub feedback: Option<Feedback>,
    /// Matches the assignee.
    #[serde(default)]
    pub user: Option<UserId>,
}

impl TaskFilter {
    pub fn matches(&self, task: &TaskRecord) -> bool {
        self.status.is_none_or(|s| task.status == s)
            && self.feedback.is_none_or(|f| task.feedback == f)
            && self.user.is_none_or(|u| task.assignee == Some(u))
    }
}

/// Everything the annotation UI needs for one task.
#[derive(Debug, Clone, Serialize)]
pub struct TaskDetail {
    pub task: TaskRecord,
    pub campaign: Campaign,
    pub element: ElementRecord,
    pub children: Vec<ElementRecord>,
    pub reference_text: Option<String>,
    pub images: crate::iiif::ElementImages,
    pub annotations: Vec<Annotation>,
    pub comments: Vec<CommentRecord>,
}

/// Tolerance for float rounding in the sampling arithmetic: 0.1 × 30 must
/// give 3, not 4.
const SAMPLE_EPS: f64 = 1e-9;

/// Positions (in id-sorted order) of the elements that get duplicate tasks:
/// every ⌊1/fraction⌋-th element, stopping after ⌈fraction·n⌉.
pub fn duplication_sample(n: usize, fraction: f64) -> Vec<usize> {
    if n == 0 || fraction <= 0.0 {
        return Vec::new();
    }
    let take = ((fraction * n as f64 - SAMPLE_EPS).ceil() as usize).min(n);
    let step = ((1.0 / fraction + SAMPLE_EPS).floor() as usize).max(1);
    (0..n).step_by(step).take(take).collect()
}

pub(crate) fn campaign_in(st: &State, campaign: CampaignId) -> Result<&Campaign> {
    st.campaigns
        .get(&campaign)
        .ok_or_else(|| Error::not_found(EntityKind::Campaign, campaign))
}

pub(crate) fn task_in(st: &State, task: TaskId) -> Result<&TaskRecord> {
    st.tasks.get(&task).ok_or_else(|| Error::not_found(EntityKind::Task, task))
}

/// Latest live transcription of `element` in its project: validated
/// annotations win over merely annotated ones, then the most recent.
pub(crate) fn reference_text(st: &State, element: &ElementRecord) -> Option<String> {
    let mut best: Option<(bool, DateTime<Utc>, AnnotationId, String)> = None;
    for campaign in st.campaigns.values() {
        if campaign.project_id != element.project_id || campaign.mode != ModeKind::Transcription {
            continue;
        }
        for task in st.campaign_tasks(campaign.campaign_id) {
            if !matches!(task.status, TaskStatus::Annotated | TaskStatus::Validated) {
                continue;
            }
            let Some(ann) = st.live_annotation(task.task_id) else { continue };
            let AnnotationPayload::Transcription { texts } = &ann.payload else { continue };
            let Some(entry) = texts.iter().find(|t| t.element_id == element.element_id) else { continue };
            let key = (task.status == TaskStatus::Validated, ann.created_at, ann.annotation_id);
            if best.as_ref().is_none_or(|b| key > (b.0, b.1, b.2)) {
                best = Some((key.0, key.1, key.2, entry.text.clone()));
            }
        }
    }
    best.map(|b| b.3)
}

pub(crate) fn element_context(st: &State, element: &ElementRecord, mode: ModeKind) -> ElementContext {
    let children = children_of_in(st, element.element_id, None).unwrap_or_default();
    let mut ctx = ElementContext::new(element.clone()).with_children(children);
    if mode == ModeKind::Entities {
        ctx.reference_text = reference_text(st, element);
    }
    ctx
}

fn check_payload(st: &State, campaign: &Campaign, element: ElementId, payload: &AnnotationPayload) -> Result<()> {
    let element = element_in(st, element)?;
    let ctx = element_context(st, element, campaign.mode);
    validate_payload(&campaign.config, &ctx, payload)?;
    Ok(())
}

fn log(st: &mut State, task: TaskId, from: Option<TaskStatus>, to: TaskStatus, actor: Option<UserId>, at: DateTime<Utc>) {
    let campaign_id = st.tasks[&task].campaign_id;
    st.events.push(TaskEvent { task_id: task, campaign_id, from, to, actor, at });
}

fn set_status(st: &mut State, task: TaskId, to: TaskStatus, actor: Option<UserId>, at: DateTime<Utc>) {
    let record = st.tasks.get_mut(&task).expect("caller checked the task exists");
    let from = record.status;
    record.status = to;
    if from != to {
        log(st, task, Some(from), to, actor, at);
    }
}

fn push_annotation(st: &mut State, task: TaskId, author: UserId, payload: AnnotationPayload, at: DateTime<Utc>) -> Annotation {
    let annotation = Annotation {
        annotation_id: st.ids.next_annotation(),
        task_id: task,
        author,
        payload,
        created_at: at,
        superseded_by: None,
    };
    st.index.task_annotations.entry(task).or_default().push(annotation.annotation_id);
    st.annotations.insert(annotation.annotation_id, annotation.clone());
    annotation
}

fn push_comment(st: &mut State, task: TaskId, author: UserId, body: &str, at: DateTime<Utc>) -> CommentRecord {
    let comment = CommentRecord {
        comment_id: st.ids.next_comment(),
        task_id: task,
        author,
        body: body.to_string(),
        created_at: at,
    };
    st.index.task_comments.entry(task).or_default().push(comment.comment_id);
    st.comments.insert(comment.comment_id, comment.clone());
    let record = st.tasks.get_mut(&task).expect("caller checked the task exists");
    if record.feedback == Feedback::None {
        record.feedback = Feedback::Commented;
    }
    comment
}

/// Releases expired claims of one campaign. Shared by the API and the job.
pub(crate) fn release_stale_in(st: &mut State, campaign: CampaignId, ttl: TimeDelta, now: DateTime<Utc>) -> usize {
    let stale: Vec<TaskId> = st
        .campaign_tasks(campaign)
        .filter(|t| t.status == TaskStatus::Pending && t.assignee.is_some())
        .filter(|t| t.claimed_at.is_some_and(|at| now - at > ttl))
        .map(|t| t.task_id)
        .collect();
    for id in &stale {
        let task = st.tasks.get_mut(id).expect("listed above");
        task.assignee = None;
        task.claimed_at = None;
    }
    stale.len()
}

fn validate_campaign_numbers(batch_size: u32, factor: u32, fraction: f64, margin: f64) -> Result<()> {
    if batch_size < 1 {
        return Err(Error::Validation("batch_size must be at least 1".into()));
    }
    if factor < 1 {
        return Err(Error::Validation("duplication_factor must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Validation("duplication_fraction must lie in [0, 1]".into()));
    }
    if factor > 1 && fraction <= 0.0 {
        return Err(Error::Validation("duplication_factor > 1 requires duplication_fraction > 0".into()));
    }
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::Validation("context_margin must be a non-negative number".into()));
    }
    Ok(())
}

impl Platform {
    pub fn create_campaign(&self, actor: UserId, project: ProjectId, new: NewCampaign) -> Result<Campaign> {
        let now = self.now();
        let config = validate_config(new.mode, &new.config)?;
        let margin = new.context_margin.unwrap_or(self.settings.default_context_margin);
        validate_campaign_numbers(new.batch_size, new.duplication_factor, new.duplication_fraction, margin)?;
        let ttl = new
            .release_ttl_secs
            .unwrap_or(self.settings.default_release_ttl.num_seconds() as u64);
        if ttl == 0 {
            return Err(Error::Validation("release_ttl_secs must be positive".into()));
        }
        let name = new.name.trim().to_string();
        if name.is_empty() {
            return Err(Error::Validation("campaign name must not be empty".into()));
        }
        self.write(|st| {
            require(st, project, actor, Action::ManageCampaign)?;
            let campaign = Campaign {
                campaign_id: st.ids.next_campaign(),
                project_id: project,
                name,
                mode: new.mode,
                config,
                guide: new.guide,
                state: CampaignState::Draft,
                batch_size: new.batch_size,
                duplication_factor: new.duplication_factor,
                duplication_fraction: new.duplication_fraction,
                release_ttl_secs: ttl,
                context_margin: margin,
                created_at: now,
            };
            st.campaigns.insert(campaign.campaign_id, campaign.clone());
            Ok(campaign)
        })
    }

    pub fn campaign(&self, actor: UserId, campaign: CampaignId) -> Result<Campaign> {
        self.read(|st| {
            let c = campaign_in(st, campaign)?;
            require(st, c.project_id, actor, Action::ViewCampaign)?;
            Ok(c.clone())
        })
    }

    pub fn campaigns_of(&self, actor: UserId, project: ProjectId) -> Result<Vec<Campaign>> {
        self.read(|st| {
            require(st, project, actor, Action::ViewCampaign)?;
            Ok(st.campaigns.values().filter(|c| c.project_id == project).cloned().collect())
        })
    }

    /// Updates state, guide or batch size. A campaign never returns to draft.
    pub fn update_campaign(&self, actor: UserId, campaign: CampaignId, patch: CampaignPatch) -> Result<Campaign> {
        self.write(|st| {
            let current = campaign_in(st, campaign)?;
            require(st, current.project_id, actor, Action::ManageCampaign)?;
            if let Some(state) = patch.state {
                if state == CampaignState::Draft && current.state != CampaignState::Draft {
                    return Err(Error::Validation("a campaign cannot return to draft".into()));
                }
            }
            if patch.batch_size == Some(0) {
                return Err(Error::Validation("batch_size must be at least 1".into()));
            }
            let c = st.campaigns.get_mut(&campaign).expect("checked above");
            if let Some(state) = patch.state {
                c.state = state;
            }
            if let Some(guide) = patch.guide {
                c.guide = guide;
            }
            if let Some(n) = patch.batch_size {
                c.batch_size = n;
            }
            Ok(c.clone())
        })
    }

    /// One draft task per element, plus `duplication_factor − 1` siblings for
    /// each sampled element, sharing a fresh dup group with the original.
    pub fn create_tasks(
        &self,
        actor: UserId,
        campaign: CampaignId,
        elements: &[ElementId],
        prefills: &BTreeMap<ElementId, AnnotationPayload>,
    ) -> Result<Vec<TaskRecord>> {
        self.write(|st| {
            let c = campaign_in(st, campaign)?.clone();
            require(st, c.project_id, actor, Action::CreateTasks)?;
            if c.state == CampaignState::Closed {
                return Err(Error::CampaignClosed);
            }
            let mut sorted: Vec<ElementId> = elements.to_vec();
            sorted.sort();
            let already = st.index.campaign_elements.get(&campaign);
            for pair in sorted.windows(2) {
                if pair[0] == pair[1] {
                    return Err(Error::AlreadyTasked(pair[0]));
                }
            }
            for id in &sorted {
                let el = element_in(st, *id)?;
                if el.project_id != c.project_id {
                    return Err(Error::not_found(EntityKind::Element, id));
                }
                if already.is_some_and(|set| set.contains(id)) {
                    return Err(Error::AlreadyTasked(*id));
                }
            }
            for (id, payload) in prefills {
                if sorted.binary_search(id).is_err() {
                    return Err(Error::Validation(format!("prefill for element {id} which is not in this batch")));
                }
                check_payload(st, &c, *id, payload)?;
            }

            let sampled: HashSet<usize> = if c.duplication_factor > 1 {
                duplication_sample(sorted.len(), c.duplication_fraction).into_iter().collect()
            } else {
                HashSet::new()
            };
            let mut created = Vec::new();
            for (pos, element_id) in sorted.iter().copied().enumerate() {
                let (group, copies) = if sampled.contains(&pos) {
                    (Some(st.ids.next_dup_group()), c.duplication_factor)
                } else {
                    (None, 1)
                };
                for _ in 0..copies {
                    let task = TaskRecord {
                        task_id: st.ids.next_task(),
                        campaign_id: campaign,
                        element_id,
                        status: TaskStatus::Draft,
                        assignee: None,
                        feedback: Feedback::None,
                        prefill: prefills.get(&element_id).cloned(),
                        dup_group: group,
                        claimed_at: None,
                        annotated_at: None,
                    };
                    st.index.campaign_tasks.entry(campaign).or_default().push(task.task_id);
                    st.index.campaign_elements.entry(campaign).or_default().insert(element_id);
                    if let Some(g) = group {
                        st.index.dup_groups.entry(g).or_default().push(task.task_id);
                    }
                    st.tasks.insert(task.task_id, task.clone());
                    created.push(task);
                }
            }
            let now = self.now();
            for task in &created {
                log(st, task.task_id, None, TaskStatus::Draft, Some(actor), now);
            }
            Ok(created)
        })
    }

    /// Moves draft tasks to pending. All listed tasks must be drafts.
    pub fn publish_tasks(&self, actor: UserId, campaign: CampaignId, task_ids: &[TaskId]) -> Result<usize> {
        let now = self.now();
        self.write(|st| {
            let c = campaign_in(st, campaign)?;
            require(st, c.project_id, actor, Action::PublishTasks)?;
            if c.state == CampaignState::Closed {
                return Err(Error::CampaignClosed);
            }
            let unique: BTreeSet<TaskId> = task_ids.iter().copied().collect();
            for id in &unique {
                let task = task_in(st, *id)?;
                if task.campaign_id != campaign {
                    return Err(Error::not_found(EntityKind::Task, id));
                }
                Transition::Publish.apply(task.status)?;
            }
            for id in &unique {
                set_status(st, *id, TaskStatus::Pending, Some(actor), now);
            }
            Ok(unique.len())
        })
    }

    /// Publishes every draft task of the campaign.
    pub fn publish_all(&self, actor: UserId, campaign: CampaignId) -> Result<usize> {
        let drafts: Vec<TaskId> = self.read(|st| {
            Ok(st
                .campaign_tasks(campaign)
                .filter(|t| t.status == TaskStatus::Draft)
                .map(|t| t.task_id)
                .collect())
        })?;
        self.publish_tasks(actor, campaign, &drafts)
    }

    /// Manager-only: returns a skipped task to the pool.
    pub fn republish_task(&self, actor: UserId, task: TaskId) -> Result<TaskRecord> {
        let now = self.now();
        self.write(|st| {
            let t = task_in(st, task)?;
            let project = campaign_in(st, t.campaign_id)?.project_id;
            require(st, project, actor, Action::RepublishTask)?;
            let to = Transition::Republish.apply(t.status)?;
            set_status(st, task, to, Some(actor), now);
            let record = st.tasks.get_mut(&task).expect("checked above");
            record.assignee = None;
            record.claimed_at = None;
            Ok(record.clone())
        })
    }

    /// Assigns up to `batch_size` pending, unassigned tasks to `user`.
    ///
    /// Never hands out a task whose dup group already contains a task claimed
    /// or annotated by the same user, so double annotations come from
    /// distinct people. An exhausted pool yields an empty list.
    pub fn claim_batch(&self, campaign: CampaignId, user: UserId, strategy: ClaimStrategy) -> Result<Vec<TaskRecord>> {
        let now = self.now();
        self.write(|st| {
            let c = campaign_in(st, campaign)?;
            require(st, c.project_id, user, Action::ClaimTasks)?;
            if c.state != CampaignState::Open {
                return Err(Error::CampaignClosed);
            }
            let batch = c.batch_size as usize;
            let mut blocked: HashSet<DupGroupId> = HashSet::new();
            let mut eligible: Vec<&TaskRecord> = Vec::new();
            for task in st.campaign_tasks(campaign) {
                let Some(group) = task.dup_group else { continue };
                let mine = task.assignee == Some(user) || st.task_annotations(task.task_id).any(|a| a.author == user);
                if mine {
                    blocked.insert(group);
                }
            }
            for task in st.campaign_tasks(campaign) {
                if task.status == TaskStatus::Pending
                    && task.assignee.is_none()
                    && task.dup_group.is_none_or(|g| !blocked.contains(&g))
                {
                    eligible.push(task);
                }
            }
            let mut order: Vec<TaskId> = match strategy {
                ClaimStrategy::Sequential => {
                    let mut keyed: Vec<(u32, TaskId)> = eligible
                        .iter()
                        .map(|t| (st.elements.get(&t.element_id).map_or(u32::MAX, |e| e.order_index), t.task_id))
                        .collect();
                    keyed.sort();
                    keyed.into_iter().map(|(_, id)| id).collect()
                }
                ClaimStrategy::Random => {
                    let mut ids: Vec<TaskId> = eligible.iter().map(|t| t.task_id).collect();
                    ids.shuffle(&mut *self.rng.lock());
                    ids
                }
            };
            let mut picked = Vec::with_capacity(batch);
            for id in order.drain(..) {
                if picked.len() == batch {
                    break;
                }
                let group = st.tasks[&id].dup_group;
                if let Some(g) = group {
                    if !blocked.insert(g) {
                        continue;
                    }
                }
                picked.push(id);
            }
            Ok(picked
                .into_iter()
                .map(|id| {
                    let task = st.tasks.get_mut(&id).expect("eligible task exists");
                    task.assignee = Some(user);
                    task.claimed_at = Some(now);
                    task.clone()
                })
                .collect())
        })
    }

    pub fn submit_annotation(&self, task: TaskId, user: UserId, payload: AnnotationPayload) -> Result<TaskRecord> {
        let now = self.now();
        self.write(|st| {
            let t = task_in(st, task)?;
            let c = campaign_in(st, t.campaign_id)?;
            require(st, c.project_id, user, Action::Annotate)?;
            if c.state == CampaignState::Closed {
                return Err(Error::CampaignClosed);
            }
            let to = Transition::Submit.apply(t.status)?;
            if t.assignee != Some(user) {
                return Err(Error::NotAssignee);
            }
            check_payload(st, c, t.element_id, &payload)?;
            push_annotation(st, task, user, payload, now);
            set_status(st, task, to, Some(user), now);
            let record = st.tasks.get_mut(&task).expect("checked above");
            record.annotated_at = Some(now);
            Ok(record.clone())
        })
    }

    /// Stores a new version of the annotation and supersedes the previous one.
    /// Allowed to the author of the live annotation and to moderators.
    pub fn revise_annotation(&self, task: TaskId, user: UserId, payload: AnnotationPayload) -> Result<Annotation> {
        let now = self.now();
        self.write(|st| {
            let t = task_in(st, task)?;
            let c = campaign_in(st, t.campaign_id)?;
            let role = require(st, c.project_id, user, Action::Annotate)?;
            let to = match t.status {
                TaskStatus::Annotated => TaskStatus::Annotated,
                other => Transition::Revise.apply(other)?,
            };
            let live = st.live_annotation(task).expect("annotated tasks carry a live annotation");
            if live.author != user && !role.covers(Action::ReviseOthers.min_role()) {
                return Err(Error::NotAuthorized);
            }
            let previous = live.annotation_id;
            check_payload(st, c, t.element_id, &payload)?;
            let annotation = push_annotation(st, task, user, payload, now);
            st.annotations.get_mut(&previous).expect("live annotation").superseded_by = Some(annotation.annotation_id);
            set_status(st, task, to, Some(user), now);
            Ok(annotation)
        })
    }

    /// Marks a claimed task as skipped. The assignee is kept for audit.
    pub fn skip_task(&self, task: TaskId, user: UserId) -> Result<TaskRecord> {
        let now = self.now();
        self.write(|st| {
            let t = task_in(st, task)?;
            let c = campaign_in(st, t.campaign_id)?;
            require(st, c.project_id, user, Action::SkipTask)?;
            let to = Transition::Skip.apply(t.status)?;
            if t.assignee != Some(user) {
                return Err(Error::NotAssignee);
            }
            set_status(st, task, to, Some(user), now);
            Ok(st.tasks[&task].clone())
        })
    }

    /// Validates or rejects an annotated task. A rejection note becomes a
    /// comment and the author is notified.
    pub fn moderate(
        &self,
        task: TaskId,
        moderator: UserId,
        decision: ModerationDecision,
        note: Option<&str>,
    ) -> Result<TaskRecord> {
        let now = self.now();
        let (record, notice) = self.write(|st| {
            let t = task_in(st, task)?;
            let project = campaign_in(st, t.campaign_id)?.project_id;
            require(st, project, moderator, Action::Moderate)?;
            let transition = match decision {
                ModerationDecision::Validate => Transition::Validate,
                ModerationDecision::Reject => Transition::Reject,
            };
            let to = transition.apply(t.status)?;
            set_status(st, task, to, Some(moderator), now);
            let note = note.map(str::trim).filter(|n| !n.is_empty());
            let mut notice = None;
            if decision == ModerationDecision::Reject {
                if let Some(note) = note {
                    push_comment(st, task, moderator, note, now);
                }
                if let Some(author) = st.live_annotation(task).map(|a| a.author) {
                    notice = Some(Notification {
                        to: st.users[&author].email.clone(),
                        subject: format!("Task {task} needs a revision"),
                        body: note.unwrap_or("Your annotation was rejected by a moderator.").to_string(),
                    });
                }
            }
            Ok((st.tasks[&task].clone(), notice))
        })?;
        if let Some(n) = notice {
            self.notifier.deliver(n);
        }
        Ok(record)
    }

    /// Clears the assignee of every pending task claimed more than `ttl` ago.
    pub fn release_stale(&self, campaign: CampaignId, ttl: TimeDelta, now: DateTime<Utc>) -> Result<usize> {
        if ttl <= TimeDelta::zero() {
            return Err(Error::Validation("ttl must be positive".into()));
        }
        self.write(|st| {
            campaign_in(st, campaign)?;
            Ok(release_stale_in(st, campaign, ttl, now))
        })
    }

    /// Releases stale claims in every open campaign, each with its own ttl.
    pub fn release_all_stale(&self, now: DateTime<Utc>) -> Result<usize> {
        self.write(|st| {
            let open: Vec<(CampaignId, TimeDelta)> = st
                .campaigns
                .values()
                .filter(|c| c.state == CampaignState::Open)
                .map(|c| (c.campaign_id, c.release_ttl()))
                .collect();
            Ok(open.into_iter().map(|(c, ttl)| release_stale_in(st, c, ttl, now)).sum())
        })
    }

    pub fn set_feedback(&self, task: TaskId, user: UserId, feedback: Feedback) -> Result<TaskRecord> {
        self.write(|st| {
            let t = task_in(st, task)?;
            let project = campaign_in(st, t.campaign_id)?.project_id;
            require(st, project, user, Action::SetFeedback)?;
            if feedback == Feedback::Uncertain && t.assignee != Some(user) {
                return Err(Error::PermissionDenied);
            }
            let record = st.tasks.get_mut(&task).expect("checked above");
            record.feedback = feedback;
            Ok(record.clone())
        })
    }

    /// Adds a comment; the first comment on a task without feedback moves it
    /// to `commented`.
    pub fn add_comment(&self, task: TaskId, user: UserId, body: &str) -> Result<(CommentRecord, TaskRecord)> {
        let now = self.now();
        self.write(|st| {
            let t = task_in(st, task)?;
            let project = campaign_in(st, t.campaign_id)?.project_id;
            require(st, project, user, Action::Comment)?;
            let body = body.trim();
            if body.is_empty() {
                return Err(Error::EmptyComment);
            }
            let comment = push_comment(st, task, user, body, now);
            Ok((comment, st.tasks[&task].clone()))
        })
    }

    /// Tasks of a campaign matching every given filter, ordered by task id.
    pub fn filter_tasks(&self, actor: UserId, campaign: CampaignId, filter: &TaskFilter) -> Result<Vec<TaskRecord>> {
        self.read(|st| {
            let c = campaign_in(st, campaign)?;
            require(st, c.project_id, actor, Action::ViewTasks)?;
            Ok(st.campaign_tasks(campaign).filter(|t| filter.matches(t)).cloned().collect())
        })
    }

    pub fn task(&self, actor: UserId, task: TaskId) -> Result<TaskRecord> {
        self.read(|st| {
            let t = task_in(st, task)?;
            require(st, campaign_in(st, t.campaign_id)?.project_id, actor, Action::ViewTasks)?;
            Ok(t.clone())
        })
    }

    pub fn task_detail(&self, actor: UserId, task: TaskId) -> Result<TaskDetail> {
        self.read(|st| {
            let t = task_in(st, task)?;
            let c = campaign_in(st, t.campaign_id)?;
            require(st, c.project_id, actor, Action::ViewTasks)?;
            let element = element_in(st, t.element_id)?;
            let ctx = element_context(st, element, ModeKind::Entities);
            Ok(TaskDetail {
                task: t.clone(),
                campaign: c.clone(),
                element: element.clone(),
                children: ctx.children,
                reference_text: ctx.reference_text,
                images: crate::iiif::element_images(element, c.context_margin),
                annotations: st.task_annotations(task).cloned().collect(),
                comments: st
                    .index
                    .task_comments
                    .get(&task)
                    .into_iter()
                    .flatten()
                    .map(|id| st.comments[id].clone())
                    .collect(),
            })
        })
    }

    /// Transition log of a campaign, oldest first.
    pub fn task_events(&self, actor: UserId, campaign: CampaignId) -> Result<Vec<TaskEvent>> {
        self.read(|st| {
            let c = campaign_in(st, campaign)?;
            require(st, c.project_id, actor, Action::ViewTasks)?;
            Ok(st.events.iter().filter(|e| e.campaign_id == campaign).cloned().collect())
        })
    }

    /// Annotations of a task, superseded ones included, oldest first.
    pub fn annotations_of(&self, actor: UserId, task: TaskId) -> Result<Vec<Annotation>> {
        self.read(|st| {
            let t = task_in(st, task)?;
            require(st, campaign_in(st, t.campaign_id)?.project_id, actor, Action::ViewTasks)?;
            Ok(st.task_annotations(task).cloned().collect())
        })
    }

}
