#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use scriptorium_core::modes::{ClassDef, FieldDatatype, FieldDef, Granularity};
use scriptorium_core::*;

pub struct World {
    pub p: Platform,
    pub clock: ManualClock,
    pub manager: UserId,
    pub moderator: UserId,
    pub annotators: Vec<UserId>,
    pub project: ProjectId,
}

pub fn start() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 1, 8, 0, 0).unwrap()
}

pub fn world_with(builder: PlatformBuilder, annotators: usize) -> World {
    let clock = ManualClock::new(start());
    let p = builder.clock(clock.clone()).seed(11).build().unwrap();
    let manager = p.register_user("manager@ex.org", "Manager", "password1", true).unwrap().user_id;
    let moderator = p.register_user("moderator@ex.org", "Moderator", "password1", false).unwrap().user_id;
    let project = p.create_project(manager, "Registers", "", Visibility::Private).unwrap().project_id;
    p.set_member_role(manager, project, moderator, Role::Moderator).unwrap();
    let annotators = (0..annotators)
        .map(|i| {
            let u = p.register_user(&format!("a{i}@ex.org"), &format!("A{i}"), "password1", false).unwrap().user_id;
            p.set_member_role(manager, project, u, Role::Contributor).unwrap();
            u
        })
        .collect();
    World { p, clock, manager, moderator, annotators, project }
}

pub fn world(annotators: usize) -> World {
    world_with(Platform::builder(), annotators)
}

pub fn page(i: u32) -> NewElement {
    NewElement {
        id: None,
        element_type: "page".into(),
        image: ImageInput { uri: format!("https://iiif.ex/page{i}"), width: 1000, height: 800 },
        polygon: Polygon::from_pairs(&[(0, 0), (1000, 0), (1000, 800), (0, 800)]),
        parent: None,
        order_index: i,
        name: format!("page {i}"),
    }
}

pub fn line(parent: &ElementRecord, i: u32) -> NewElement {
    let y = 20 + 40 * i64::from(i);
    NewElement {
        id: None,
        element_type: "text_line".into(),
        image: ImageInput::from(&parent.image),
        polygon: Polygon::from_pairs(&[(50, y), (950, y), (950, y + 30), (50, y + 30)]),
        parent: Some(parent.element_id),
        order_index: i,
        name: format!("line {i}"),
    }
}

impl World {
    pub fn pages(&self, n: u32) -> Vec<ElementRecord> {
        self.p.import_element_batch(self.manager, self.project, (0..n).map(page).collect()).unwrap()
    }

    pub fn lines(&self, parent: &ElementRecord, n: u32) -> Vec<ElementRecord> {
        self.p.import_element_batch(self.manager, self.project, (0..n).map(|i| line(parent, i)).collect()).unwrap()
    }

    /// Campaign with tasks for `elements`, published and open.
    pub fn open_campaign(&self, new: NewCampaign, elements: &[ElementId]) -> CampaignId {
        let c = self.p.create_campaign(self.manager, self.project, new).unwrap().campaign_id;
        self.p.create_tasks(self.manager, c, elements, &BTreeMap::new()).unwrap();
        self.p.publish_all(self.manager, c).unwrap();
        let open = CampaignPatch { state: Some(CampaignState::Open), ..Default::default() };
        self.p.update_campaign(self.manager, c, open).unwrap();
        c
    }

    /// Claims one task for `user` and submits `payload`.
    pub fn annotate(&self, c: CampaignId, user: UserId, payload: AnnotationPayload) -> TaskRecord {
        let task = self.p.claim_batch(c, user, ClaimStrategy::Sequential).unwrap().remove(0);
        self.p.submit_annotation(task.task_id, user, payload).unwrap()
    }
}

pub fn classes(ids: &[&str]) -> ModeConfig {
    ModeConfig::Classification {
        classes: ids.iter().map(|c| ClassDef { class_id: c.to_string(), label: c.to_string() }).collect(),
    }
}

pub fn text_field(id: &str) -> FieldDef {
    FieldDef { field_id: id.into(), label: id.into(), datatype: FieldDatatype::Text, required: false, choices: None }
}

pub fn key_value(ids: &[&str]) -> ModeConfig {
    ModeConfig::KeyValue { fields: ids.iter().map(|i| text_field(i)).collect() }
}

pub fn line_transcription() -> ModeConfig {
    ModeConfig::Transcription { granularity: Granularity::LineByLine, target_element_type: "text_line".into() }
}

pub fn class(c: &str) -> AnnotationPayload {
    AnnotationPayload::Classification { class_id: c.into() }
}
