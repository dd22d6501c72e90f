mod common;

use std::sync::Arc;

use chrono::TimeDelta;
use common::*;
use scriptorium_core::*;

#[test]
fn file_storage_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let (campaign, task, token) = {
        let w = world_with(Platform::builder().storage(FileStorage::new(&path)), 1);
        let pages = w.pages(2);
        let c = w.open_campaign(NewCampaign::new("c", classes(&["A", "B"])), &[pages[0].element_id, pages[1].element_id]);
        let t = w.annotate(c, w.annotators[0], class("B"));
        let token = w.p.login("a0@ex.org", "password1").unwrap().token;
        (c, t.task_id, token)
    };
    let p = Platform::builder().storage(FileStorage::new(&path)).clock(ManualClock::new(start())).build().unwrap();
    let user = p.authenticate(&token).unwrap();
    let task_after = p.task(user, task).unwrap();
    assert_eq!(task_after.status, TaskStatus::Annotated);
    assert_eq!(p.annotations_of(user, task).unwrap()[0].payload, class("B"));
    // Indexes are rebuilt: claims and id allocation continue where they stopped.
    let next = p.claim_batch(campaign, user, ClaimStrategy::Sequential).unwrap();
    assert_eq!(next.len(), 1);
    assert_ne!(next[0].task_id, task);
    let fresh = p.register_user("late@ex.org", "Late", "password1", false).unwrap();
    assert!(fresh.user_id > user);
}

#[test]
fn failed_commit_rolls_back_the_mutation() {
    let storage = Arc::new(FaultInjectingStorage::new(MemoryStorage));
    let w = world_with(Platform::builder().storage(storage.clone()), 1);
    let pages = w.pages(1);
    let c = w.open_campaign(NewCampaign::new("c", classes(&["A"])), &[pages[0].element_id]);
    let user = w.annotators[0];
    let task = w.p.claim_batch(c, user, ClaimStrategy::Sequential).unwrap().remove(0);
    let before = serde_json::to_value(w.p.snapshot()).unwrap();

    storage.fail_next_commit();
    let err = w.p.submit_annotation(task.task_id, user, class("A")).unwrap_err();
    assert!(matches!(err, Error::StorageUnavailable(_)));
    assert_eq!(serde_json::to_value(w.p.snapshot()).unwrap(), before);

    let done = w.p.submit_annotation(task.task_id, user, class("A")).unwrap();
    assert_eq!(done.status, TaskStatus::Annotated);
    assert_eq!(w.p.annotations_of(user, task.task_id).unwrap().len(), 1);
}

#[test]
fn failed_commit_during_claim_hands_out_nothing() {
    let storage = Arc::new(FaultInjectingStorage::new(MemoryStorage));
    let w = world_with(Platform::builder().storage(storage.clone()), 2);
    let pages = w.pages(1);
    let c = w.open_campaign(NewCampaign::new("c", classes(&["A"])), &[pages[0].element_id]);
    storage.fail_next_commit();
    assert!(w.p.claim_batch(c, w.annotators[0], ClaimStrategy::Sequential).is_err());
    let got = w.p.claim_batch(c, w.annotators[1], ClaimStrategy::Sequential).unwrap();
    assert_eq!(got[0].assignee, Some(w.annotators[1]));
}

#[test]
fn interrupted_job_is_requeued_and_applied_once() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let w = world_with(Platform::builder().storage(FileStorage::new(&path)), 0);
    let manifest = r#"{"items":[{"id":"c0","width":10,"height":10,"items":[{"items":[{"body":{"service":[{"id":"https://iiif.ex/x"}]}}]}]}]}"#;
    let job = w
        .p
        .enqueue_job(w.manager, w.project, JobPayload::IngestManifest { document: Some(manifest.into()), url: None, page_type: "page".into() })
        .unwrap();
    let running = w.p.claim_next_job().unwrap().unwrap();
    assert_eq!((running.job_id, running.state), (job.job_id, JobState::Running));
    let manager = w.manager;
    let project = w.project;
    drop(w);

    let p = Platform::builder().storage(FileStorage::new(&path)).build().unwrap();
    assert_eq!(p.job(manager, job.job_id).unwrap().state, JobState::Queued);
    assert_eq!(p.drain_jobs(|_| Err("no network".into())).unwrap(), 1);
    let done = p.job(manager, job.job_id).unwrap();
    assert_eq!(done.state, JobState::Done);
    assert_eq!(done.attempts, 2);
    assert_eq!(p.elements_of(manager, project, None).unwrap().len(), 1);
    assert_eq!(p.drain_jobs(|_| Err("no network".into())).unwrap(), 0);
}

#[test]
fn expired_sessions_are_rejected() {
    let w = world(1);
    let token = w.p.login("a0@ex.org", "password1").unwrap().token;
    assert_eq!(w.p.authenticate(&token).unwrap(), w.annotators[0]);
    w.clock.advance(TimeDelta::days(8));
    assert_eq!(w.p.authenticate(&token), Err(Error::Unauthenticated));
}
