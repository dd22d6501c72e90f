mod common;

use common::*;
use scriptorium_core::*;

fn manifest(n: usize) -> String {
    let canvases: Vec<serde_json::Value> = (0..n)
        .map(|i| {
            serde_json::json!({
                "id": format!("https://ex.org/c{i}"), "type": "Canvas", "label": {"none": [format!("f{i}")]},
                "width": 1200, "height": 1600,
                "items": [{"type": "AnnotationPage", "items": [{"type": "Annotation",
                    "body": {"type": "Image", "service": [{"id": format!("https://iiif.ex/m{i}"), "type": "ImageService3"}]}}]}]
            })
        })
        .collect();
    serde_json::json!({"type": "Manifest", "items": canvases}).to_string()
}

fn ingest(document: Option<String>, url: Option<&str>) -> JobPayload {
    JobPayload::IngestManifest { document, url: url.map(str::to_string), page_type: "page".into() }
}

#[test]
fn ingest_job_from_document() {
    let w = world(0);
    let job = w.p.enqueue_job(w.manager, w.project, ingest(Some(manifest(3)), None)).unwrap();
    assert_eq!((job.kind, job.state), (JobKind::IngestManifest, JobState::Queued));
    assert_eq!(w.p.drain_jobs(|_| unreachable!()).unwrap(), 1);
    let done = w.p.job(w.manager, job.job_id).unwrap();
    assert_eq!(done.result, Some(JobResult::Ingested { elements: 3 }));
    let pages = w.p.elements_of(w.manager, w.project, None).unwrap();
    assert_eq!(pages.iter().map(|p| p.order_index).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(pages[1].name, "f1");
    assert_eq!(pages[2].image.iiif_base_uri, "https://iiif.ex/m2");
}

#[test]
fn ingest_job_from_url() {
    let w = world(0);
    let job = w.p.enqueue_job(w.manager, w.project, ingest(None, Some("https://ex.org/manifest.json"))).unwrap();
    let mut fetched = Vec::new();
    w.p.drain_jobs(|url| {
        fetched.push(url.to_string());
        Ok(manifest(2))
    })
    .unwrap();
    assert_eq!(fetched, vec!["https://ex.org/manifest.json"]);
    assert_eq!(w.p.job(w.manager, job.job_id).unwrap().state, JobState::Done);
}

#[test]
fn failed_jobs_leave_no_effects() {
    let w = world(0);
    let bad = w.p.enqueue_job(w.manager, w.project, ingest(Some("{\"items\":[{\"height\":5}]}".into()), None)).unwrap();
    let unreachable = w.p.enqueue_job(w.manager, w.project, ingest(None, Some("https://ex.org/m"))).unwrap();
    w.p.drain_jobs(|_| Err("timed out".into())).unwrap();
    let bad = w.p.job(w.manager, bad.job_id).unwrap();
    assert_eq!(bad.state, JobState::Failed);
    assert!(bad.error.unwrap().contains("width"));
    let unreachable = w.p.job(w.manager, unreachable.job_id).unwrap();
    assert_eq!((unreachable.state, unreachable.error.as_deref()), (JobState::Failed, Some("timed out")));
    assert!(w.p.elements_of(w.manager, w.project, None).unwrap().is_empty());
}

#[test]
fn enqueue_checks_payload_and_role() {
    let w = world(1);
    assert!(matches!(w.p.enqueue_job(w.manager, w.project, ingest(None, None)), Err(Error::Validation(_))));
    assert!(matches!(w.p.enqueue_job(w.manager, w.project, ingest(None, Some("not a url"))), Err(Error::Validation(_))));
    assert_eq!(w.p.enqueue_job(w.annotators[0], w.project, ingest(Some(manifest(1)), None)), Err(Error::PermissionDenied));
    let export = JobPayload::Export { campaign: CampaignId(77), format: ExportFormat::Csv, options: Default::default() };
    assert!(matches!(w.p.enqueue_job(w.manager, w.project, export), Err(Error::NotFound { .. })));
}

#[test]
fn export_and_release_jobs() {
    let w = world(2);
    let pages = w.pages(2);
    let c = w.open_campaign(NewCampaign::new("c", classes(&["A"])), &[pages[0].element_id, pages[1].element_id]);
    w.annotate(c, w.annotators[0], class("A"));
    w.p.claim_batch(c, w.annotators[1], ClaimStrategy::Sequential).unwrap();
    w.clock.advance(chrono::TimeDelta::hours(25));

    let csv_job = w.p.enqueue_job(w.manager, w.project, JobPayload::Export { campaign: c, format: ExportFormat::Csv, options: Default::default() }).unwrap();
    let json_job = w.p.enqueue_job(w.manager, w.project, JobPayload::Export { campaign: c, format: ExportFormat::Json, options: Default::default() }).unwrap();
    let release = w.p.enqueue_job(w.manager, w.project, JobPayload::ReleaseStale { campaign: c }).unwrap();
    assert_eq!(w.p.drain_jobs(|_| unreachable!()).unwrap(), 3);

    let csv = w.p.export_artifact(w.manager, csv_job.job_id).unwrap();
    assert_eq!(csv.format, ExportFormat::Csv);
    assert_eq!(csv.body.lines().count(), 2);
    let json = w.p.export_artifact(w.manager, json_job.job_id).unwrap();
    let doc: export::ExportDocument = serde_json::from_str(&json.body).unwrap();
    assert_eq!(doc.tasks.len(), 1);
    assert_eq!(w.p.job(w.manager, release.job_id).unwrap().result, Some(JobResult::Released { tasks: 1 }));
    assert_eq!(w.p.export_artifact(w.moderator, csv_job.job_id), Err(Error::PermissionDenied));
    assert!(matches!(w.p.export_artifact(w.manager, release.job_id), Err(Error::NotFound { kind: EntityKind::Export, .. })));
}

#[test]
fn direct_ingestion_of_a_large_manifest() {
    let w = world(0);
    let pages = w.p.ingest_manifest(w.manager, w.project, &manifest(616), "page").unwrap();
    assert_eq!(pages.len(), 616);
    assert!(pages.iter().enumerate().all(|(i, p)| p.order_index == i as u32));
    assert!(pages.iter().all(|p| p.polygon == p.image.full_frame()));
}
