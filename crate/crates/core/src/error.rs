use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::elements::GeometryError;
use crate::iiif::{ManifestError, RegionError};
use crate::ids::ElementId;
use crate::modes::{ConfigError, PartitionError, PayloadError};
use crate::tasks::{TaskStatus, Transition};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Kinds of addressable records, used by [`Error::NotFound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    User,
    Project,
    Element,
    Campaign,
    Task,
    Job,
    Export,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityKind::User => "user",
            EntityKind::Project => "project",
            EntityKind::Element => "element",
            EntityKind::Campaign => "campaign",
            EntityKind::Task => "task",
            EntityKind::Job => "job",
            EntityKind::Export => "export",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("authentication required")]
    Unauthenticated,
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("permission denied")]
    PermissionDenied,
    #[error("only the original author or a moderator may revise this annotation")]
    NotAuthorized,
    #[error("task is not assigned to this user")]
    NotAssignee,
    #[error("invalid or inactive invitation token")]
    InvalidToken,
    #[error("unknown {kind} {id}")]
    NotFound { kind: EntityKind, id: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("an account with this email already exists")]
    EmailTaken,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("unknown parent element {0}")]
    UnknownParent(ElementId),
    #[error("element hierarchy would contain a cycle through {0}")]
    Cycle(ElementId),
    #[error("order index {order_index} is already used under parent {parent}")]
    DuplicateOrder { parent: ElementId, order_index: u32 },
    #[error("element id {0} is already in use")]
    DuplicateElement(ElementId),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("illegal transition: cannot {transition} a task in status {from}")]
    IllegalTransition {
        from: TaskStatus,
        transition: Transition,
    },
    #[error("campaign is not open")]
    CampaignClosed,
    #[error("element {0} already has a task in this campaign")]
    AlreadyTasked(ElementId),
    #[error("comment body is empty")]
    EmptyComment,
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("line {line}: {source}")]
    Import { line: usize, source: Box<Error> },
    #[error("storage unavailable: {0}")]
    StorageUnavailable(String),
}

impl Error {
    pub(crate) fn not_found(kind: EntityKind, id: impl fmt::Display) -> Self {
        Error::NotFound {
            kind,
            id: id.to_string(),
        }
    }

    /// Stable machine-readable code for the error, used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Unauthenticated => "unauthenticated",
            Error::InvalidCredentials => "invalid_credentials",
            Error::PermissionDenied => "permission_denied",
            Error::NotAuthorized => "not_authorized",
            Error::NotAssignee => "not_assignee",
            Error::InvalidToken => "invalid_token",
            Error::NotFound { .. } => "not_found",
            Error::Validation(_) => "validation_error",
            Error::EmailTaken => "email_taken",
            Error::Geometry(_) => "geometry_error",
            Error::UnknownParent(_) => "unknown_parent",
            Error::Cycle(_) => "cycle_error",
            Error::DuplicateOrder { .. } => "duplicate_order",
            Error::DuplicateElement(_) => "duplicate_element",
            Error::Config(_) => "config_error",
            Error::Payload(_) => "payload_error",
            Error::Partition(_) => "unknown_member",
            Error::IllegalTransition { .. } => "illegal_transition",
            Error::CampaignClosed => "campaign_closed",
            Error::AlreadyTasked(_) => "already_tasked",
            Error::EmptyComment => "empty_comment",
            Error::Region(_) => "region_error",
            Error::Manifest(_) => "manifest_error",
            Error::Import { source, .. } => source.code(),
            Error::StorageUnavailable(_) => "storage_unavailable",
        }
    }

    /// Strips import line wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Import { source, .. } => source.root(),
            other => other,
        }
    }
}
