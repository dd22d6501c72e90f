//! Identifier newtypes.
//!
//! Identifiers are allocated sequentially by the store, which makes "sort by
//! id" a stable, reproducible ordering for exports and sampling.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = std::num::ParseIntError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.parse().map($name)
            }
        }
    };
}

id_type!(UserId);
id_type!(ProjectId);
id_type!(ElementId);
id_type!(CampaignId);
id_type!(TaskId);
id_type!(AnnotationId);
id_type!(CommentId);
id_type!(JobId);
id_type!(
    /// Key shared by the sibling tasks created for one double-annotated element.
    DupGroupId
);

/// Monotonic counters backing every identifier space.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct IdSequence {
    user: u64,
    project: u64,
    element: u64,
    campaign: u64,
    task: u64,
    annotation: u64,
    comment: u64,
    job: u64,
    dup_group: u64,
}

macro_rules! next_fn {
    ($fn_name:ident, $field:ident, $ty:ident) => {
        pub(crate) fn $fn_name(&mut self) -> $ty {
            self.$field += 1;
            $ty(self.$field)
        }
    };
}

impl IdSequence {
    next_fn!(next_user, user, UserId);
    next_fn!(next_project, project, ProjectId);
    next_fn!(next_element, element, ElementId);
    next_fn!(next_campaign, campaign, CampaignId);
    next_fn!(next_task, task, TaskId);
    next_fn!(next_annotation, annotation, AnnotationId);
    next_fn!(next_comment, comment, CommentId);
    next_fn!(next_job, job, JobId);
    next_fn!(next_dup_group, dup_group, DupGroupId);

    /// Keeps the element counter ahead of caller-assigned ids.
    pub(crate) fn observe_element(&mut self, id: ElementId) {
        self.element = self.element.max(id.0);
    }
}
