//! CSV and JSON exports of campaign annotations.

use std::collections::BTreeSet;
use std::io::{self, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{require, Action};
use crate::elements::ElementRecord;
use crate::error::{Error, Result};
use crate::iiif::{element_crop, image_url};
use crate::ids::{CampaignId, DupGroupId, TaskId};
use crate::modes::{AnnotationPayload, ModeConfig, ModeKind};
use crate::platform::Platform;
use crate::store::State;
use crate::tasks::{campaign_in, reference_text, Annotation, TaskRecord, TaskStatus};

pub const LEADING_COLUMNS: [&str; 7] = ["task_id", "element_id", "element_name", "image_url", "status", "author", "created_at"];

/// Appended when superseded annotations are requested.
pub const SUPERSEDED_COLUMN: &str = "superseded_by";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportOptions {
    pub statuses: BTreeSet<TaskStatus>,
    #[serde(default)]
    pub include_superseded: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            statuses: [TaskStatus::Annotated, TaskStatus::Validated].into_iter().collect(),
            include_superseded: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ExportTable {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write_csv_record(out, &self.header)?;
        for row in &self.rows {
            write_csv_record(out, row)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("cells are UTF-8")
    }
}

/// RFC 4180 field: quoted when it holds a comma, quote, CR or LF, with
/// embedded quotes doubled.
pub fn csv_field(cell: &str) -> std::borrow::Cow<'_, str> {
    if cell.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", cell.replace('"', "\"\"")).into()
    } else {
        cell.into()
    }
}

/// One record terminated by LF.
pub fn write_csv_record<W: Write, S: AsRef<str>>(out: &mut W, cells: &[S]) -> io::Result<()> {
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            out.write_all(b",")?;
        }
        out.write_all(csv_field(cell.as_ref()).as_bytes())?;
    }
    out.write_all(b"\n")
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Column names after the leading ones. Key-value field ids that clash
/// with another column get a `field.` prefix.
pub fn mode_columns(config: &ModeConfig) -> Vec<String> {
    let fixed = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect();
    match config {
        ModeConfig::Classification { .. } => fixed(&["class"]),
        ModeConfig::Transcription { .. } => fixed(&["text"]),
        ModeConfig::Entities { .. } => fixed(&["offset", "length", "type", "surface_text"]),
        ModeConfig::Structure { .. } => fixed(&["zone_type", "polygon"]),
        ModeConfig::Grouping { .. } => fixed(&["group_index", "member_element_id"]),
        ModeConfig::KeyValue { fields } => {
            let mut used: BTreeSet<String> = LEADING_COLUMNS.iter().map(|c| c.to_string()).collect();
            used.insert(SUPERSEDED_COLUMN.to_string());
            let ids: BTreeSet<&str> = fields.iter().map(|f| f.field_id.as_str()).collect();
            fields
                .iter()
                .map(|f| {
                    let mut name = f.field_id.clone();
                    while used.contains(&name) || (name != f.field_id && ids.contains(name.as_str())) {
                        name = format!("field.{name}");
                    }
                    used.insert(name.clone());
                    name
                })
                .collect()
        }
    }
}

/// Cells of the mode columns: one list for single-row modes, one per item
/// for multi-row modes.
fn mode_cells(config: &ModeConfig, payload: &AnnotationPayload, reference: Option<&str>) -> Vec<Vec<String>> {
    match (config, payload) {
        (_, AnnotationPayload::Classification { class_id }) => vec![vec![class_id.clone()]],
        (_, AnnotationPayload::Transcription { texts }) => {
            // Multi-element transcriptions join the entries in order.
            vec![vec![texts.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n")]]
        }
        (ModeConfig::KeyValue { fields }, AnnotationPayload::KeyValue { values }) => {
            vec![fields.iter().map(|f| values.get(&f.field_id).cloned().unwrap_or_default()).collect()]
        }
        (_, AnnotationPayload::KeyValue { .. }) => vec![],
        (_, AnnotationPayload::Entities { spans }) => {
            let chars: Option<Vec<char>> = reference.map(|r| r.chars().collect());
            spans
                .iter()
                .map(|s| {
                    let surface = chars
                        .as_ref()
                        .and_then(|c| c.get(s.offset..s.end()))
                        .map(|c| c.iter().collect())
                        .unwrap_or_default();
                    vec![s.offset.to_string(), s.length.to_string(), s.type_id.clone(), surface]
                })
                .collect()
        }
        (_, AnnotationPayload::Structure { zones }) => {
            zones.iter().map(|z| vec![z.type_id.clone(), z.polygon.to_cell()]).collect()
        }
        (_, AnnotationPayload::Grouping { groups }) => groups
            .iter()
            .flat_map(|g| g.member_element_ids.iter().map(move |m| vec![g.group_index.to_string(), m.to_string()]))
            .collect(),
    }
}

/// Tasks within the status filter, ordered by element order then task id.
fn selected_tasks<'a>(st: &'a State, campaign: CampaignId, statuses: &BTreeSet<TaskStatus>) -> Vec<(&'a TaskRecord, &'a ElementRecord)> {
    let mut tasks: Vec<(&TaskRecord, &ElementRecord)> = st
        .campaign_tasks(campaign)
        .filter(|t| statuses.contains(&t.status))
        .filter_map(|t| st.elements.get(&t.element_id).map(|e| (t, e)))
        .collect();
    tasks.sort_by_key(|(t, e)| (e.order_index, t.task_id));
    tasks
}

fn exported_annotations<'a>(st: &'a State, task: TaskId, include_superseded: bool) -> Vec<&'a Annotation> {
    st.task_annotations(task)
        .filter(|a| include_superseded || a.superseded_by.is_none())
        .collect()
}

pub(crate) fn table_in(st: &State, campaign: CampaignId, options: &ExportOptions) -> Result<ExportTable> {
    let c = campaign_in(st, campaign)?;
    let mut header: Vec<String> = LEADING_COLUMNS.iter().map(|c| c.to_string()).collect();
    header.extend(mode_columns(&c.config));
    if options.include_superseded {
        header.push(SUPERSEDED_COLUMN.to_string());
    }
    let mut rows = Vec::new();
    for (task, element) in selected_tasks(st, campaign, &options.statuses) {
        let url = image_url(&element.image, element_crop(element), None)?;
        let reference = if c.mode == ModeKind::Entities { reference_text(st, element) } else { None };
        for annotation in exported_annotations(st, task.task_id, options.include_superseded) {
            let leading = [
                task.task_id.to_string(),
                element.element_id.to_string(),
                element.name.clone(),
                url.clone(),
                task.status.to_string(),
                annotation.author.to_string(),
                timestamp(annotation.created_at),
            ];
            for cells in mode_cells(&c.config, &annotation.payload, reference.as_deref()) {
                let mut row: Vec<String> = leading.to_vec();
                row.extend(cells);
                if options.include_superseded {
                    row.push(annotation.superseded_by.map(|a| a.to_string()).unwrap_or_default());
                }
                debug_assert_eq!(row.len(), header.len());
                rows.push(row);
            }
        }
    }
    Ok(ExportTable { header, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportCampaign {
    pub id: CampaignId,
    pub name: String,
    pub mode: ModeKind,
    pub config: ModeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportTask {
    pub task: TaskId,
    pub element: ElementRecord,
    pub status: TaskStatus,
    pub dup_group: Option<DupGroupId>,
    /// Every annotation of the task, oldest first, with supersession links.
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportDocument {
    pub campaign: ExportCampaign,
    pub tasks: Vec<ExportTask>,
}

pub(crate) fn document_in(st: &State, campaign: CampaignId, statuses: &BTreeSet<TaskStatus>) -> Result<ExportDocument> {
    let c = campaign_in(st, campaign)?;
    let tasks = selected_tasks(st, campaign, statuses)
        .into_iter()
        .map(|(task, element)| ExportTask {
            task: task.task_id,
            element: element.clone(),
            status: task.status,
            dup_group: task.dup_group,
            annotations: st.task_annotations(task.task_id).cloned().collect(),
        })
        .collect();
    Ok(ExportDocument {
        campaign: ExportCampaign { id: c.campaign_id, name: c.name.clone(), mode: c.mode, config: c.config.clone() },
        tasks,
    })
}

impl Platform {
    pub fn export_table(&self, actor: crate::ids::UserId, campaign: CampaignId, options: &ExportOptions) -> Result<ExportTable> {
        self.read(|st| {
            require(st, campaign_in(st, campaign)?.project_id, actor, Action::Export)?;
            table_in(st, campaign, options)
        })
    }

    /// Writes the CSV export and returns the number of data rows. The table
    /// is taken from one consistent snapshot, then written without holding
    /// the store lock.
    pub fn export_csv<W: Write>(
        &self,
        actor: crate::ids::UserId,
        campaign: CampaignId,
        options: &ExportOptions,
        out: &mut W,
    ) -> Result<usize> {
        let table = self.export_table(actor, campaign, options)?;
        table
            .write_csv(out)
            .map_err(|e| Error::Validation(format!("export write failed: {e}")))?;
        Ok(table.rows.len())
    }

    pub fn export_json(&self, actor: crate::ids::UserId, campaign: CampaignId, options: &ExportOptions) -> Result<ExportDocument> {
        self.read(|st| {
            require(st, campaign_in(st, campaign)?.project_id, actor, Action::Export)?;
            document_in(st, campaign, &options.statuses)
        })
    }
}
