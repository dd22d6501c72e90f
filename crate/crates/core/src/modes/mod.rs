//! The six annotation modes. Each mode has exactly one configuration shape and
//! one payload shape; both are tagged with `"mode"` in their JSON encoding.

mod config;
mod payload;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{
    validate_config, ClassDef, ConfigError, ConfigRule, EntityTypeDef, FieldDatatype, FieldDef,
    Granularity, ModeConfig, ZoneTypeDef,
};
pub use payload::{
    entity_spans_overlap, grouping_partition_check, is_valid_partial_date, validate_payload,
    AnnotationPayload, ElementContext, EntitySpan, Group, PartitionError, PartitionReport,
    PayloadError, TextEntry, Violation, ViolationCode, Zone,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Classification,
    Structure,
    Transcription,
    Entities,
    KeyValue,
    Grouping,
}

impl ModeKind {
    pub const ALL: [ModeKind; 6] = [
        ModeKind::Classification,
        ModeKind::Structure,
        ModeKind::Transcription,
        ModeKind::Entities,
        ModeKind::KeyValue,
        ModeKind::Grouping,
    ];

    /// Modes exported as one row per payload item rather than per annotation.
    pub fn is_multi_row(self) -> bool {
        matches!(self, ModeKind::Structure | ModeKind::Entities | ModeKind::Grouping)
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModeKind::Classification => "classification",
            ModeKind::Structure => "structure",
            ModeKind::Transcription => "transcription",
            ModeKind::Entities => "entities",
            ModeKind::KeyValue => "key_value",
            ModeKind::Grouping => "grouping",
        })
    }
}
