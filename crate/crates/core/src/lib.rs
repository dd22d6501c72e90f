//! Core of a collaborative annotation platform for digitised document
//! images.
//!
//! Managers describe documents as typed [elements](elements) over IIIF
//! images, configure [campaigns](tasks) in one of six annotation
//! [modes](modes), and contributors claim and complete tasks. The crate
//! also computes [progress and agreement statistics](stats) and
//! [exports](export).
//!
//! All state lives in one [`Platform`], which serialises writes and
//! persists each committed write through a [`Storage`] backend.

pub mod auth;
pub mod clock;
pub mod domain;
pub mod elements;
pub mod error;
pub mod export;
pub mod ids;
pub mod iiif;
pub mod jobs;
pub mod modes;
pub mod notify;
pub mod platform;
pub mod stats;
pub mod store;
pub mod tasks;

pub use auth::{SessionKind, SessionToken};
pub use clock::{Clock, ManualClock, SystemClock};
pub use domain::{InvitationLink, MemberView, Membership, Project, ProjectSummary, Role, UserProfile, Visibility};
pub use elements::{bounding_box, BoundingBox, ElementRecord, GeometryError, ImageInput, ImageRef, NewElement, Point, Polygon};
pub use error::{EntityKind, Error, Result};
pub use export::{ExportDocument, ExportOptions, ExportTable};
pub use ids::*;
pub use iiif::{context_crop, image_url, parse_manifest, parse_region, IiifRegion, ManifestError, ManifestPage, RegionError};
pub use jobs::{ExportArtifact, ExportFormat, JobKind, JobPayload, JobRecord, JobResult, JobState};
pub use modes::{AnnotationPayload, ModeConfig, ModeKind};
pub use notify::{JsonlFileSink, LogSink, MemorySink, Notification, NotificationSink};
pub use platform::{Platform, PlatformBuilder, Settings};
pub use stats::{AgreementReport, Kappa, ProgressReport, TimingReport};
pub use store::{FaultInjectingStorage, FileStorage, MemoryStorage, State, Storage, StorageError};
pub use tasks::{
    Annotation, Campaign, CampaignPatch, CampaignState, ClaimStrategy, CommentRecord, Feedback, ModerationDecision,
    NewCampaign, TaskDetail, TaskEvent, TaskFilter, TaskRecord, TaskStatus, Transition,
};
