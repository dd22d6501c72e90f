use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use super::config::{FieldDatatype, ModeConfig};
use super::ModeKind;
use crate::elements::{ElementRecord, Polygon};
use crate::ids::ElementId;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Zone {
    pub polygon: Polygon,
    pub type_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEntry {
    pub element_id: ElementId,
    /// The empty string is a legal transcription meaning illegible or blank.
    pub text: String,
}

/// A half-open character range `[offset, offset + length)` of the reference
/// text. Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub offset: usize,
    pub length: usize,
    pub type_id: String,
}

impl EntitySpan {
    pub fn end(&self) -> usize {
        self.offset.saturating_add(self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub group_index: u32,
    pub member_element_ids: Vec<ElementId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AnnotationPayload {
    Classification {
        class_id: String,
    },
    Structure {
        zones: Vec<Zone>,
    },
    Transcription {
        texts: Vec<TextEntry>,
    },
    Entities {
        spans: Vec<EntitySpan>,
    },
    KeyValue {
        #[serde(deserialize_with = "scalar_map")]
        values: BTreeMap<String, String>,
    },
    Grouping {
        groups: Vec<Group>,
    },
}

impl AnnotationPayload {
    pub fn kind(&self) -> ModeKind {
        match self {
            AnnotationPayload::Classification { .. } => ModeKind::Classification,
            AnnotationPayload::Structure { .. } => ModeKind::Structure,
            AnnotationPayload::Transcription { .. } => ModeKind::Transcription,
            AnnotationPayload::Entities { .. } => ModeKind::Entities,
            AnnotationPayload::KeyValue { .. } => ModeKind::KeyValue,
            AnnotationPayload::Grouping { .. } => ModeKind::Grouping,
        }
    }

    /// Number of exported rows for multi-row modes: zones, spans, or group
    /// memberships.
    pub fn item_count(&self) -> usize {
        match self {
            AnnotationPayload::Structure { zones } => zones.len(),
            AnnotationPayload::Entities { spans } => spans.len(),
            AnnotationPayload::Grouping { groups } => groups.iter().map(|g| g.member_element_ids.len()).sum(),
            _ => 1,
        }
    }
}

/// Key-value input may carry numbers or booleans; they are kept as strings.
fn scalar_map<'de, D: Deserializer<'de>>(de: D) -> Result<BTreeMap<String, String>, D::Error> {
    let raw: BTreeMap<String, serde_json::Value> = BTreeMap::deserialize(de)?;
    raw.into_iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                serde_json::Value::Null => String::new(),
                other => {
                    return Err(serde::de::Error::custom(format!("field {k:?}: expected a scalar, got {other}")));
                }
            };
            Ok((k, s))
        })
        .collect()
}

/// What a payload is checked against besides the campaign config.
#[derive(Debug, Clone)]
pub struct ElementContext {
    /// The task's element; its image bounds structure zones.
    pub element: ElementRecord,
    /// Direct children of the element.
    pub children: Vec<ElementRecord>,
    /// Text that entity spans index into.
    pub reference_text: Option<String>,
}

impl ElementContext {
    pub fn new(element: ElementRecord) -> Self {
        Self { element, children: Vec::new(), reference_text: None }
    }

    pub fn with_children(mut self, children: Vec<ElementRecord>) -> Self {
        self.children = children;
        self
    }

    pub fn with_reference_text(mut self, text: impl Into<String>) -> Self {
        self.reference_text = Some(text.into());
        self
    }

    fn children_of_type(&self, element_type: &str) -> BTreeSet<ElementId> {
        self.children
            .iter()
            .filter(|c| c.element_type == element_type)
            .map(|c| c.element_id)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    ModeMismatch,
    UnknownClass,
    UnknownType,
    UnknownField,
    UnknownElement,
    NoTargets,
    MissingText,
    DuplicateText,
    NoReferenceText,
    EmptySpan,
    SpanOutOfBounds,
    SpansOverlap,
    MissingRequired,
    InvalidValue,
    InvalidPolygon,
    ZoneOutOfImage,
    EmptyGroup,
    DuplicateGroupIndex,
    NotAChild,
    ElementInTwoGroups,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Location inside the payload, e.g. `spans/1` or `values/surname`.
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { code, path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub struct PayloadError {
    pub violations: Vec<Violation>,
}

impl PayloadError {
    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

impl fmt::Display for PayloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid annotation payload:")?;
        for v in &self.violations {
            write!(f, " [{}: {}]", v.path, v.message)?;
        }
        Ok(())
    }
}

/// True iff two spans intersect as half-open intervals.
pub fn entity_spans_overlap(spans: &[EntitySpan]) -> bool {
    let mut sorted: Vec<&EntitySpan> = spans.iter().filter(|s| s.length > 0).collect();
    sorted.sort_by_key(|s| (s.offset, s.end()));
    sorted.windows(2).any(|w| w[1].offset < w[0].end())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("element {0} is not an eligible child")]
    UnknownMember(ElementId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PartitionReport {
    pub covered: BTreeSet<ElementId>,
    pub uncovered: BTreeSet<ElementId>,
    pub duplicated: BTreeSet<ElementId>,
}

/// Coverage diagnostics of `groups` over `eligible_children`.
pub fn grouping_partition_check(
    groups: &[Group],
    eligible_children: &BTreeSet<ElementId>,
) -> Result<PartitionReport, PartitionError> {
    let mut counts: BTreeMap<ElementId, usize> = BTreeMap::new();
    for id in groups.iter().flat_map(|g| &g.member_element_ids) {
        if !eligible_children.contains(id) {
            return Err(PartitionError::UnknownMember(*id));
        }
        *counts.entry(*id).or_default() += 1;
    }
    Ok(PartitionReport {
        covered: counts.keys().copied().collect(),
        uncovered: eligible_children.iter().filter(|id| !counts.contains_key(id)).copied().collect(),
        duplicated: counts.iter().filter(|(_, &n)| n > 1).map(|(id, _)| *id).collect(),
    })
}

/// `YYYY`, `YYYY-MM` or `YYYY-MM-DD`, calendar-valid.
pub fn is_valid_partial_date(value: &str) -> bool {
    let parts: Vec<&str> = value.split('-').collect();
    let digits = |s: &str, n: usize| s.len() == n && s.bytes().all(|b| b.is_ascii_digit());
    match parts.as_slice() {
        [y] => digits(y, 4),
        [y, m] => digits(y, 4) && digits(m, 2) && (1..=12).contains(&m.parse::<u32>().unwrap_or(0)),
        [y, m, d] => {
            digits(y, 4)
                && digits(m, 2)
                && digits(d, 2)
                && NaiveDate::from_ymd_opt(y.parse().unwrap_or(0), m.parse().unwrap_or(0), d.parse().unwrap_or(0)).is_some()
        }
        _ => false,
    }
}

fn is_integer(value: &str) -> bool {
    value.parse::<i64>().is_ok()
}

/// Checks `payload` against a validated `config` and the element context.
/// Every violation is reported, not just the first.
pub fn validate_payload(config: &ModeConfig, ctx: &ElementContext, payload: &AnnotationPayload) -> Result<(), PayloadError> {
    let mut out = Vec::new();
    match (config, payload) {
        (ModeConfig::Classification { classes }, AnnotationPayload::Classification { class_id }) => {
            if !classes.iter().any(|c| &c.class_id == class_id) {
                out.push(Violation::new(ViolationCode::UnknownClass, "class_id", format!("unknown class {class_id:?}")));
            }
        }
        (ModeConfig::Structure { zone_types }, AnnotationPayload::Structure { zones }) => {
            for (i, zone) in zones.iter().enumerate() {
                let path = format!("zones/{i}");
                if !zone_types.iter().any(|t| t.type_id == zone.type_id) {
                    out.push(Violation::new(ViolationCode::UnknownType, &path, format!("unknown zone type {:?}", zone.type_id)));
                }
                if let Err(e) = zone.polygon.validate_shape() {
                    out.push(Violation::new(ViolationCode::InvalidPolygon, &path, e.to_string()));
                } else if let Err(e) = zone.polygon.validate_for(&ctx.element.image) {
                    out.push(Violation::new(ViolationCode::ZoneOutOfImage, &path, e.to_string()));
                }
            }
        }
        (ModeConfig::Transcription { target_element_type, .. }, AnnotationPayload::Transcription { texts }) => {
            let targets: BTreeSet<ElementId> = if &ctx.element.element_type == target_element_type {
                BTreeSet::from([ctx.element.element_id])
            } else {
                ctx.children_of_type(target_element_type)
            };
            if targets.is_empty() {
                out.push(Violation::new(
                    ViolationCode::NoTargets,
                    "texts",
                    format!("element has no {target_element_type:?} elements to transcribe"),
                ));
            }
            let mut seen = HashSet::new();
            for (i, entry) in texts.iter().enumerate() {
                let path = format!("texts/{i}");
                if !targets.contains(&entry.element_id) {
                    out.push(Violation::new(
                        ViolationCode::UnknownElement,
                        &path,
                        format!("element {} is not a transcription target", entry.element_id),
                    ));
                } else if !seen.insert(entry.element_id) {
                    out.push(Violation::new(ViolationCode::DuplicateText, &path, format!("element {} transcribed twice", entry.element_id)));
                }
            }
            for missing in targets.iter().filter(|t| !seen.contains(t)) {
                out.push(Violation::new(ViolationCode::MissingText, "texts", format!("no text for element {missing}")));
            }
        }
        (ModeConfig::Entities { entity_types }, AnnotationPayload::Entities { spans }) => {
            let text_len = ctx.reference_text.as_ref().map(|t| t.chars().count());
            if text_len.is_none() && !spans.is_empty() {
                out.push(Violation::new(ViolationCode::NoReferenceText, "spans", "element has no reference transcription"));
            }
            for (i, span) in spans.iter().enumerate() {
                let path = format!("spans/{i}");
                if !entity_types.iter().any(|t| t.type_id == span.type_id) {
                    out.push(Violation::new(ViolationCode::UnknownType, &path, format!("unknown entity type {:?}", span.type_id)));
                }
                if span.length == 0 {
                    out.push(Violation::new(ViolationCode::EmptySpan, &path, "span length must be at least 1"));
                }
                if let Some(len) = text_len {
                    if span.offset.checked_add(span.length).is_none_or(|end| end > len) {
                        out.push(Violation::new(
                            ViolationCode::SpanOutOfBounds,
                            &path,
                            format!("span [{}, {}+{}) exceeds text length {len}", span.offset, span.offset, span.length),
                        ));
                    }
                }
            }
            if entity_spans_overlap(spans) {
                out.push(Violation::new(ViolationCode::SpansOverlap, "spans", "entity spans must not overlap"));
            }
        }
        (ModeConfig::KeyValue { fields }, AnnotationPayload::KeyValue { values }) => {
            for key in values.keys().filter(|k| !fields.iter().any(|f| &f.field_id == *k)) {
                out.push(Violation::new(ViolationCode::UnknownField, format!("values/{key}"), format!("unknown field {key:?}")));
            }
            for field in fields {
                let path = format!("values/{}", field.field_id);
                let value = values.get(&field.field_id).map(|v| v.trim()).unwrap_or("");
                if value.is_empty() {
                    if field.required {
                        out.push(Violation::new(ViolationCode::MissingRequired, &path, format!("{:?} is required", field.field_id)));
                    }
                    continue;
                }
                let ok = match field.datatype {
                    FieldDatatype::Text => true,
                    FieldDatatype::Integer => is_integer(value),
                    FieldDatatype::Date => is_valid_partial_date(value),
                    FieldDatatype::Choice => field.choices.iter().flatten().any(|c| c == value),
                };
                if !ok {
                    out.push(Violation::new(
                        ViolationCode::InvalidValue,
                        &path,
                        format!("{value:?} is not a valid {:?} value", field.datatype),
                    ));
                }
            }
        }
        (ModeConfig::Grouping { child_element_type, overlap_allowed, .. }, AnnotationPayload::Grouping { groups }) => {
            let eligible = ctx.children_of_type(child_element_type);
            let mut indexes = HashMap::new();
            for (i, group) in groups.iter().enumerate() {
                let path = format!("groups/{i}");
                if group.member_element_ids.is_empty() {
                    out.push(Violation::new(ViolationCode::EmptyGroup, &path, "a group needs at least one member"));
                }
                if let Some(first) = indexes.insert(group.group_index, i) {
                    out.push(Violation::new(
                        ViolationCode::DuplicateGroupIndex,
                        &path,
                        format!("group index {} already used by groups/{first}", group.group_index),
                    ));
                }
                for id in group.member_element_ids.iter().filter(|id| !eligible.contains(id)) {
                    out.push(Violation::new(
                        ViolationCode::NotAChild,
                        &path,
                        format!("element {id} is not a {child_element_type:?} child of the page"),
                    ));
                }
            }
            if !overlap_allowed {
                let mut seen = HashSet::new();
                let mut reported = HashSet::new();
                for id in groups.iter().flat_map(|g| &g.member_element_ids) {
                    if !seen.insert(*id) && reported.insert(*id) {
                        out.push(Violation::new(ViolationCode::ElementInTwoGroups, "groups", format!("element {id} appears in more than one group")));
                    }
                }
            }
        }
        (config, payload) => {
            out.push(Violation::new(
                ViolationCode::ModeMismatch,
                "mode",
                format!("{} payload submitted to a {} campaign", payload.kind(), config.kind()),
            ));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(PayloadError { violations: out })
    }
}
