mod common;

use std::collections::BTreeMap;

use chrono::TimeDelta;
use common::*;
use scriptorium_core::modes::{Group, ModeConfig};
use scriptorium_core::stats::{Kappa, PairMetric};
use scriptorium_core::*;

#[test]
fn progress_counts_match_filters() {
    let w = world(3);
    let pages = w.pages(15);
    let ids: Vec<ElementId> = pages.iter().map(|p| p.element_id).collect();
    let c = w.open_campaign(NewCampaign::new("c", classes(&["A"])).batch_size(5), &ids);
    let mut annotated = Vec::new();
    for (i, user) in w.annotators.iter().enumerate().take(2) {
        for t in w.p.claim_batch(c, *user, ClaimStrategy::Sequential).unwrap() {
            if annotated.len() < 10 {
                w.p.submit_annotation(t.task_id, *user, class("A")).unwrap();
                annotated.push(t.task_id);
            }
        }
        assert!(i < 2);
    }
    for t in &annotated[..3] {
        w.p.moderate(*t, w.moderator, ModerationDecision::Validate, None).unwrap();
    }
    let report = w.p.progress(w.manager, c).unwrap();
    assert_eq!((report.counts.pending, report.counts.annotated, report.counts.validated), (5, 7, 3));
    assert_eq!(report.total, 15);
    assert_eq!(report.completion_ratio, 10.0 / 15.0);
    assert_eq!(report.per_user.values().sum::<usize>(), 10);
    for status in TaskStatus::ALL {
        let filter = TaskFilter { status: Some(status), ..Default::default() };
        assert_eq!(w.p.filter_tasks(w.manager, c, &filter).unwrap().len(), report.counts.get(status), "{status}");
    }
}

#[test]
fn empty_campaign_progress() {
    let w = world(0);
    let c = w.p.create_campaign(w.manager, w.project, NewCampaign::new("c", classes(&["A"]))).unwrap().campaign_id;
    let report = w.p.progress(w.manager, c).unwrap();
    assert_eq!((report.total, report.completion_ratio), (0, 0.0));
}

#[test]
fn classification_agreement_with_kappa() {
    let w = world(2);
    let pages = w.pages(10);
    let ids: Vec<ElementId> = pages.iter().map(|p| p.element_id).collect();
    let c = w.open_campaign(NewCampaign::new("c", classes(&["A", "B"])).batch_size(10).duplication(2, 1.0), &ids);
    // Same confusion matrix as the hand-computed κ = 0.6 example.
    let x = ["A", "A", "A", "A", "A", "B", "B", "B", "B", "B"];
    let y = ["A", "A", "A", "A", "B", "A", "B", "B", "B", "B"];
    for (user, labels) in [(w.annotators[0], x), (w.annotators[1], y)] {
        let mut batch = w.p.claim_batch(c, user, ClaimStrategy::Sequential).unwrap();
        batch.sort_by_key(|t| t.element_id);
        assert_eq!(batch.len(), 10);
        for (t, label) in batch.iter().zip(labels) {
            w.p.submit_annotation(t.task_id, user, class(label)).unwrap();
        }
    }
    let report = w.p.agreement(w.moderator, c).unwrap();
    assert_eq!(report.n_pairs, 10);
    assert_eq!(report.rows.len(), 10);
    assert!((report.mean.unwrap() - 0.8).abs() < 1e-12);
    match report.kappa.unwrap() {
        Kappa::Defined { kappa, observed, expected } => {
            assert!((kappa - 0.6).abs() < 1e-12);
            assert!((observed - 0.8).abs() < 1e-12);
            assert!((expected - 0.5).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
    for row in &report.rows {
        assert_ne!(row.author_a, row.author_b);
    }
    assert_eq!(w.p.agreement(w.annotators[0], c), Err(Error::PermissionDenied));
}

#[test]
fn grouping_agreement_example() {
    let w = world(2);
    let page = &w.pages(1)[0];
    let rows = w.p
        .import_element_batch(
            w.manager,
            w.project,
            (0..3).map(|i| NewElement { element_type: "row".into(), ..line(page, i) }).collect(),
        )
        .unwrap();
    let (a, b, c_) = (rows[0].element_id, rows[1].element_id, rows[2].element_id);
    let config = ModeConfig::Grouping { group_label: "record".into(), child_element_type: "row".into(), overlap_allowed: false };
    let c = w.open_campaign(NewCampaign::new("g", config).duplication(2, 1.0), &[page.element_id]);
    let g = |i, m: Vec<ElementId>| Group { group_index: i, member_element_ids: m };
    w.annotate(c, w.annotators[0], AnnotationPayload::Grouping { groups: vec![g(0, vec![a, b]), g(1, vec![c_])] });
    w.annotate(c, w.annotators[1], AnnotationPayload::Grouping { groups: vec![g(0, vec![a, b, c_])] });
    let report = w.p.agreement(w.manager, c).unwrap();
    assert_eq!(report.n_pairs, 1);
    assert_eq!(report.rows[0].metric, PairMetric::Jaccard { jaccard: 1.0 / 3.0 });
    assert_eq!(report.kappa, None);
}

#[test]
fn transcription_agreement_is_symmetric_cer() {
    let w = world(2);
    let page = &w.pages(1)[0];
    let line = &w.lines(page, 1)[0];
    let c = w.open_campaign(NewCampaign::new("t", line_transcription()).duplication(2, 1.0), &[line.element_id]);
    let text = |s: &str| AnnotationPayload::Transcription {
        texts: vec![scriptorium_core::modes::TextEntry { element_id: line.element_id, text: s.into() }],
    };
    w.annotate(c, w.annotators[0], text("chat"));
    w.annotate(c, w.annotators[1], text("chats"));
    let report = w.p.agreement(w.manager, c).unwrap();
    match &report.rows[0].metric {
        PairMetric::Cer { a_to_b, b_to_a, mean } => {
            assert_eq!(*a_to_b, 0.25);
            assert_eq!(*b_to_a, 0.2);
            assert!((mean - 0.225).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn no_completed_pairs_gives_empty_report() {
    let w = world(1);
    let pages = w.pages(2);
    let c = w.open_campaign(NewCampaign::new("c", classes(&["A"])).duplication(2, 1.0), &[pages[0].element_id]);
    w.annotate(c, w.annotators[0], class("A"));
    let report = w.p.agreement(w.manager, c).unwrap();
    assert_eq!((report.n_pairs, report.rows.len(), report.mean, report.kappa), (0, 0, None, None));
}

#[test]
fn median_time_with_outlier_cap_and_prefill_filter() {
    let w = world(1);
    let pages = w.pages(4);
    let ids: Vec<ElementId> = pages.iter().map(|p| p.element_id).collect();
    let c = w.p.create_campaign(w.manager, w.project, NewCampaign::new("c", classes(&["A"]))).unwrap().campaign_id;
    let prefills = BTreeMap::from([(ids[3], class("A"))]);
    w.p.create_tasks(w.manager, c, &ids, &prefills).unwrap();
    w.p.publish_all(w.manager, c).unwrap();
    w.p.update_campaign(w.manager, c, CampaignPatch { state: Some(CampaignState::Open), ..Default::default() }).unwrap();
    let user = w.annotators[0];
    for secs in [10, 13, 7200, 4] {
        let t = w.p.claim_batch(c, user, ClaimStrategy::Sequential).unwrap().remove(0);
        w.clock.advance(TimeDelta::seconds(secs));
        w.p.submit_annotation(t.task_id, user, class("A")).unwrap();
    }
    let blank = w.p.annotation_timing(w.manager, c, Some(false)).unwrap();
    assert_eq!(blank.median_seconds, Some(11.5));
    assert_eq!((blank.counted, blank.excluded), (2, 1));
    let prefilled = w.p.annotation_timing(w.manager, c, Some(true)).unwrap();
    assert_eq!(prefilled.median_seconds, Some(4.0));
    let all = w.p.annotation_timing(w.manager, c, None).unwrap();
    assert_eq!(all.median_seconds, Some(10.0));
}
