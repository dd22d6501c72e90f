use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ModeKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub class_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneTypeDef {
    pub type_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTypeDef {
    pub type_id: String,
    pub label: String,
    /// `#rgb` or `#rrggbb`.
    pub color: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldDatatype {
    Text,
    Integer,
    /// ISO-8601 calendar date; `YYYY` and `YYYY-MM` are accepted too.
    Date,
    Choice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub field_id: String,
    pub label: String,
    pub datatype: FieldDatatype,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    LineByLine,
    PageByPage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ModeConfig {
    Classification {
        classes: Vec<ClassDef>,
    },
    Structure {
        zone_types: Vec<ZoneTypeDef>,
    },
    Transcription {
        granularity: Granularity,
        target_element_type: String,
    },
    Entities {
        entity_types: Vec<EntityTypeDef>,
    },
    KeyValue {
        fields: Vec<FieldDef>,
    },
    Grouping {
        group_label: String,
        child_element_type: String,
        /// Whether one element may belong to several groups.
        #[serde(default)]
        overlap_allowed: bool,
    },
}

impl ModeConfig {
    pub fn kind(&self) -> ModeKind {
        match self {
            ModeConfig::Classification { .. } => ModeKind::Classification,
            ModeConfig::Structure { .. } => ModeKind::Structure,
            ModeConfig::Transcription { .. } => ModeKind::Transcription,
            ModeConfig::Entities { .. } => ModeKind::Entities,
            ModeConfig::KeyValue { .. } => ModeKind::KeyValue,
            ModeConfig::Grouping { .. } => ModeKind::Grouping,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigRule {
    ModeMismatch,
    EmptyList,
    EmptyId,
    DuplicateId,
    TooFewChoices,
    DuplicateChoice,
    UnexpectedChoices,
    InvalidColor,
    MissingElementType,
}

/// The first rule a configuration violates.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("invalid {mode} configuration ({rule:?}): {message}")]
pub struct ConfigError {
    pub mode: ModeKind,
    pub rule: ConfigRule,
    pub message: String,
}

fn unique_ids<'a>(mode: ModeKind, what: &str, ids: impl Iterator<Item = &'a mut String>) -> Result<usize, ConfigError> {
    let err = |rule, message: String| ConfigError { mode, rule, message };
    let mut seen = HashSet::new();
    for id in ids {
        *id = id.trim().to_string();
        if id.is_empty() {
            return Err(err(ConfigRule::EmptyId, format!("{what} id must not be empty")));
        }
        if !seen.insert(id.clone()) {
            return Err(err(ConfigRule::DuplicateId, format!("duplicate {what} id {id:?}")));
        }
    }
    if seen.is_empty() {
        return Err(err(ConfigRule::EmptyList, format!("at least one {what} is required")));
    }
    Ok(seen.len())
}

fn is_hex_color(s: &str) -> bool {
    s.strip_prefix('#')
        .is_some_and(|hex| matches!(hex.len(), 3 | 6) && hex.chars().all(|c| c.is_ascii_hexdigit()))
}

/// Checks `config` against the rules of `mode` and returns its normalized
/// form: ids and choices trimmed, no duplicates.
pub fn validate_config(mode: ModeKind, config: &ModeConfig) -> Result<ModeConfig, ConfigError> {
    let err = |rule, message: String| ConfigError { mode, rule, message };
    if config.kind() != mode {
        return Err(err(
            ConfigRule::ModeMismatch,
            format!("configuration is for {} but campaign mode is {mode}", config.kind()),
        ));
    }
    let mut config = config.clone();
    match &mut config {
        ModeConfig::Classification { classes } => {
            unique_ids(mode, "class", classes.iter_mut().map(|c| &mut c.class_id))?;
        }
        ModeConfig::Structure { zone_types } => {
            unique_ids(mode, "zone type", zone_types.iter_mut().map(|z| &mut z.type_id))?;
        }
        ModeConfig::Transcription { target_element_type, .. } => {
            *target_element_type = target_element_type.trim().to_string();
            if target_element_type.is_empty() {
                return Err(err(ConfigRule::MissingElementType, "target_element_type must not be empty".into()));
            }
        }
        ModeConfig::Entities { entity_types } => {
            unique_ids(mode, "entity type", entity_types.iter_mut().map(|t| &mut t.type_id))?;
            for t in entity_types.iter_mut() {
                t.color = t.color.trim().to_ascii_lowercase();
                if !is_hex_color(&t.color) {
                    return Err(err(ConfigRule::InvalidColor, format!("{:?} is not a hex color", t.color)));
                }
            }
        }
        ModeConfig::KeyValue { fields } => {
            unique_ids(mode, "field", fields.iter_mut().map(|f| &mut f.field_id))?;
            for field in fields.iter_mut() {
                match (field.datatype, field.choices.as_mut()) {
                    (FieldDatatype::Choice, Some(choices)) => {
                        let mut seen = HashSet::new();
                        for choice in choices.iter_mut() {
                            *choice = choice.trim().to_string();
                            if !seen.insert(choice.clone()) {
                                return Err(err(
                                    ConfigRule::DuplicateChoice,
                                    format!("field {:?} lists {choice:?} twice", field.field_id),
                                ));
                            }
                        }
                        if choices.len() < 2 {
                            return Err(err(
                                ConfigRule::TooFewChoices,
                                format!("choice field {:?} needs at least 2 choices", field.field_id),
                            ));
                        }
                    }
                    (FieldDatatype::Choice, None) => {
                        return Err(err(
                            ConfigRule::TooFewChoices,
                            format!("choice field {:?} needs at least 2 choices", field.field_id),
                        ));
                    }
                    (_, Some(_)) => {
                        return Err(err(
                            ConfigRule::UnexpectedChoices,
                            format!("field {:?} is not a choice field", field.field_id),
                        ));
                    }
                    (_, None) => {}
                }
            }
        }
        ModeConfig::Grouping { child_element_type, group_label, .. } => {
            *child_element_type = child_element_type.trim().to_string();
            *group_label = group_label.trim().to_string();
            if child_element_type.is_empty() {
                return Err(err(ConfigRule::MissingElementType, "child_element_type must not be empty".into()));
            }
        }
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(ids: &[&str]) -> ModeConfig {
        ModeConfig::Classification {
            classes: ids.iter().map(|id| ClassDef { class_id: id.to_string(), label: id.to_string() }).collect(),
        }
    }

    fn rule(mode: ModeKind, config: &ModeConfig) -> ConfigRule {
        validate_config(mode, config).unwrap_err().rule
    }

    #[test]
    fn classification_configs() {
        assert!(validate_config(ModeKind::Classification, &classes(&["A", "B"])).is_ok());
        assert_eq!(rule(ModeKind::Classification, &classes(&[])), ConfigRule::EmptyList);
        assert_eq!(rule(ModeKind::Classification, &classes(&["A", " A "])), ConfigRule::DuplicateId);
        assert_eq!(rule(ModeKind::Structure, &classes(&["A"])), ConfigRule::ModeMismatch);
    }

    fn kv(field: FieldDef) -> ModeConfig {
        ModeConfig::KeyValue { fields: vec![field] }
    }

    fn choice_field(choices: Option<Vec<&str>>) -> FieldDef {
        FieldDef {
            field_id: "alive".into(),
            label: "Alive".into(),
            datatype: FieldDatatype::Choice,
            required: false,
            choices: choices.map(|c| c.into_iter().map(String::from).collect()),
        }
    }

    #[test]
    fn choice_fields_need_two_choices() {
        assert_eq!(rule(ModeKind::KeyValue, &kv(choice_field(Some(vec!["yes"])))), ConfigRule::TooFewChoices);
        assert_eq!(rule(ModeKind::KeyValue, &kv(choice_field(None))), ConfigRule::TooFewChoices);
        assert_eq!(rule(ModeKind::KeyValue, &kv(choice_field(Some(vec!["yes", "yes "])))), ConfigRule::DuplicateChoice);
        let ok = validate_config(ModeKind::KeyValue, &kv(choice_field(Some(vec![" yes", "no  "])))).unwrap();
        let ModeConfig::KeyValue { fields } = ok else { unreachable!() };
        assert_eq!(fields[0].choices.as_deref(), Some(&["yes".to_string(), "no".to_string()][..]));
    }

    #[test]
    fn choices_on_text_field_rejected() {
        let mut f = choice_field(Some(vec!["a", "b"]));
        f.datatype = FieldDatatype::Text;
        assert_eq!(rule(ModeKind::KeyValue, &kv(f)), ConfigRule::UnexpectedChoices);
    }

    #[test]
    fn entity_colors_must_be_hex() {
        let cfg = |color: &str| ModeConfig::Entities {
            entity_types: vec![EntityTypeDef { type_id: "person".into(), label: "Person".into(), color: color.into() }],
        };
        assert!(validate_config(ModeKind::Entities, &cfg("#A1b2C3")).is_ok());
        assert!(validate_config(ModeKind::Entities, &cfg("#abc")).is_ok());
        assert_eq!(rule(ModeKind::Entities, &cfg("red")), ConfigRule::InvalidColor);
    }

    #[test]
    fn element_types_required() {
        let t = ModeConfig::Transcription { granularity: Granularity::LineByLine, target_element_type: " ".into() };
        assert_eq!(rule(ModeKind::Transcription, &t), ConfigRule::MissingElementType);
        let g = ModeConfig::Grouping { group_label: "article".into(), child_element_type: "".into(), overlap_allowed: false };
        assert_eq!(rule(ModeKind::Grouping, &g), ConfigRule::MissingElementType);
    }

    #[test]
    fn canonical_encoding() {
        let json = serde_json::to_value(classes(&["A"])).unwrap();
        assert_eq!(json, serde_json::json!({"mode": "classification", "classes": [{"class_id": "A", "label": "A"}]}));
        let g: ModeConfig = serde_json::from_str(r#"{"mode":"grouping","group_label":"household","child_element_type":"row"}"#).unwrap();
        assert_eq!(g, ModeConfig::Grouping { group_label: "household".into(), child_element_type: "row".into(), overlap_allowed: false });
    }
}
