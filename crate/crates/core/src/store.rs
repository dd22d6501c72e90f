//! Persistence contract.
//!
//! The whole platform state lives in one [`State`] value guarded by a single
//! lock in [`crate::Platform`]. A [`Storage`] backend receives the state after
//! every successful mutation; if it refuses the commit the mutation is rolled
//! back, so a task is always observed either before or after a transition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::Session;
use crate::domain::{InvitationRecord, Membership, Project, UserAccount};
use crate::elements::ElementRecord;
use crate::ids::*;
use crate::jobs::{ExportArtifact, JobRecord};
use crate::tasks::{Annotation, Campaign, CommentRecord, TaskEvent, TaskRecord};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct StorageError(pub String);

pub trait Storage: Send + Sync {
    /// Previously committed state, if any.
    fn load(&self) -> Result<Option<State>, StorageError>;

    fn commit(&self, state: &State) -> Result<(), StorageError>;

    /// Whether commits can fail. Non-durable backends skip the rollback copy.
    fn is_durable(&self) -> bool {
        true
    }
}

/// Keeps nothing outside process memory.
#[derive(Debug, Default)]
pub struct MemoryStorage;

impl Storage for MemoryStorage {
    fn load(&self) -> Result<Option<State>, StorageError> {
        Ok(None)
    }

    fn commit(&self, _state: &State) -> Result<(), StorageError> {
        Ok(())
    }

    fn is_durable(&self) -> bool {
        false
    }
}

/// JSON snapshot file, replaced atomically (write to a sibling temp file,
/// fsync, rename) on every commit.
#[derive(Debug)]
pub struct FileStorage {
    path: PathBuf,
}

impl FileStorage {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Storage for FileStorage {
    fn load(&self) -> Result<Option<State>, StorageError> {
        match fs::read(&self.path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| StorageError(format!("corrupt snapshot {}: {e}", self.path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StorageError(e.to_string())),
        }
    }

    fn commit(&self, state: &State) -> Result<(), StorageError> {
        let io = |e: std::io::Error| StorageError(e.to_string());
        let bytes = serde_json::to_vec(state).map_err(|e| StorageError(e.to_string()))?;
        let tmp = self.path.with_extension("tmp");
        {
            let mut file = fs::File::create(&tmp).map_err(io)?;
            file.write_all(&bytes).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, &self.path).map_err(io)
    }
}

/// Wraps another backend and fails commits on demand. Used to check that a
/// failed commit never leaves a half-applied mutation behind.
#[derive(Debug)]
pub struct FaultInjectingStorage<S> {
    inner: S,
    fail_next: AtomicBool,
    commits: AtomicUsize,
}

impl<S: Storage> FaultInjectingStorage<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            fail_next: AtomicBool::new(false),
            commits: AtomicUsize::new(0),
        }
    }

    /// The next commit fails with [`StorageError`].
    pub fn fail_next_commit(&self) {
        self.fail_next.store(true, Ordering::SeqCst);
    }

    pub fn successful_commits(&self) -> usize {
        self.commits.load(Ordering::SeqCst)
    }
}

impl<S: Storage> Storage for FaultInjectingStorage<S> {
    fn load(&self) -> Result<Option<State>, StorageError> {
        self.inner.load()
    }

    fn commit(&self, state: &State) -> Result<(), StorageError> {
        if self.fail_next.swap(false, Ordering::SeqCst) {
            return Err(StorageError("injected commit failure".into()));
        }
        self.inner.commit(state)?;
        self.commits.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

impl<S: Storage + ?Sized> Storage for std::sync::Arc<S> {
    fn load(&self) -> Result<Option<State>, StorageError> {
        (**self).load()
    }

    fn commit(&self, state: &State) -> Result<(), StorageError> {
        (**self).commit(state)
    }

    fn is_durable(&self) -> bool {
        (**self).is_durable()
    }
}

/// Every record the platform owns.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct State {
    pub(crate) ids: IdSequence,
    pub(crate) users: BTreeMap<UserId, UserAccount>,
    pub(crate) projects: BTreeMap<ProjectId, Project>,
    pub(crate) memberships: BTreeMap<ProjectId, BTreeMap<UserId, Membership>>,
    pub(crate) invitations: Vec<InvitationRecord>,
    pub(crate) elements: BTreeMap<ElementId, ElementRecord>,
    pub(crate) campaigns: BTreeMap<CampaignId, Campaign>,
    pub(crate) tasks: BTreeMap<TaskId, TaskRecord>,
    pub(crate) annotations: BTreeMap<AnnotationId, Annotation>,
    pub(crate) comments: BTreeMap<CommentId, CommentRecord>,
    pub(crate) events: Vec<TaskEvent>,
    pub(crate) sessions: BTreeMap<String, Session>,
    pub(crate) jobs: BTreeMap<JobId, JobRecord>,
    pub(crate) artifacts: BTreeMap<JobId, ExportArtifact>,
    #[serde(skip)]
    pub(crate) index: Index,
}

/// Secondary lookups derived from the primary maps; rebuilt after load.
#[derive(Debug, Clone, Default)]
pub(crate) struct Index {
    pub(crate) email: HashMap<String, UserId>,
    pub(crate) children: BTreeMap<ElementId, BTreeSet<ElementId>>,
    pub(crate) campaign_tasks: BTreeMap<CampaignId, Vec<TaskId>>,
    pub(crate) campaign_elements: BTreeMap<CampaignId, BTreeSet<ElementId>>,
    pub(crate) task_annotations: BTreeMap<TaskId, Vec<AnnotationId>>,
    pub(crate) task_comments: BTreeMap<TaskId, Vec<CommentId>>,
    pub(crate) dup_groups: BTreeMap<DupGroupId, Vec<TaskId>>,
}

impl State {
    pub(crate) fn reindex(&mut self) {
        let mut index = Index::default();
        for user in self.users.values() {
            index.email.insert(user.email.to_lowercase(), user.user_id);
        }
        for el in self.elements.values() {
            if let Some(parent) = el.parent {
                index.children.entry(parent).or_default().insert(el.element_id);
            }
        }
        for task in self.tasks.values() {
            index.campaign_tasks.entry(task.campaign_id).or_default().push(task.task_id);
            index
                .campaign_elements
                .entry(task.campaign_id)
                .or_default()
                .insert(task.element_id);
            if let Some(group) = task.dup_group {
                index.dup_groups.entry(group).or_default().push(task.task_id);
            }
        }
        for ann in self.annotations.values() {
            index.task_annotations.entry(ann.task_id).or_default().push(ann.annotation_id);
        }
        for c in self.comments.values() {
            index.task_comments.entry(c.task_id).or_default().push(c.comment_id);
        }
        self.index = index;
    }

    pub(crate) fn campaign_task_ids(&self, campaign: CampaignId) -> &[TaskId] {
        self.index
            .campaign_tasks
            .get(&campaign)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub(crate) fn campaign_tasks(&self, campaign: CampaignId) -> impl Iterator<Item = &TaskRecord> {
        self.campaign_task_ids(campaign).iter().map(|id| &self.tasks[id])
    }

    pub(crate) fn task_annotations(&self, task: TaskId) -> impl Iterator<Item = &Annotation> {
        self.index
            .task_annotations
            .get(&task)
            .into_iter()
            .flatten()
            .map(|id| &self.annotations[id])
    }

    /// The non-superseded annotation of a task, if any.
    pub(crate) fn live_annotation(&self, task: TaskId) -> Option<&Annotation> {
        self.task_annotations(task).find(|a| a.superseded_by.is_none())
    }

    pub(crate) fn children_ids(&self, element: ElementId) -> impl Iterator<Item = ElementId> + '_ {
        self.index.children.get(&element).into_iter().flatten().copied()
    }
}
