//! Campaign progress, double-annotation agreement and timing statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{require, Action};
use crate::error::Result;
use crate::ids::{CampaignId, DupGroupId, ElementId, TaskId, UserId};
use crate::modes::{AnnotationPayload, ModeConfig, ModeKind};
use crate::platform::Platform;
use crate::store::State;
use crate::tasks::{campaign_in, TaskStatus};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub draft: usize,
    pub pending: usize,
    pub annotated: usize,
    pub validated: usize,
    pub rejected: usize,
    pub skipped: usize,
}

impl StatusCounts {
    pub fn get(&self, status: TaskStatus) -> usize {
        match status {
            TaskStatus::Draft => self.draft,
            TaskStatus::Pending => self.pending,
            TaskStatus::Annotated => self.annotated,
            TaskStatus::Validated => self.validated,
            TaskStatus::Rejected => self.rejected,
            TaskStatus::Skipped => self.skipped,
        }
    }

    fn bump(&mut self, status: TaskStatus) {
        let slot = match status {
            TaskStatus::Draft => &mut self.draft,
            TaskStatus::Pending => &mut self.pending,
            TaskStatus::Annotated => &mut self.annotated,
            TaskStatus::Validated => &mut self.validated,
            TaskStatus::Rejected => &mut self.rejected,
            TaskStatus::Skipped => &mut self.skipped,
        };
        *slot += 1;
    }

    pub fn total(&self) -> usize {
        TaskStatus::ALL.iter().map(|s| self.get(*s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressReport {
    pub campaign_id: CampaignId,
    pub counts: StatusCounts,
    pub total: usize,
    /// (annotated + validated) / total; 0 for an empty campaign.
    pub completion_ratio: f64,
    /// Tasks carrying a live annotation, by author of that annotation.
    pub per_user: BTreeMap<UserId, usize>,
}

pub fn completion_ratio(counts: &StatusCounts) -> f64 {
    let total = counts.total();
    if total == 0 {
        0.0
    } else {
        (counts.annotated + counts.validated) as f64 / total as f64
    }
}

pub(crate) fn progress_in(st: &State, campaign: CampaignId) -> ProgressReport {
    let mut counts = StatusCounts::default();
    let mut per_user = BTreeMap::new();
    for task in st.campaign_tasks(campaign) {
        counts.bump(task.status);
        if task.status.has_annotation() {
            if let Some(a) = st.live_annotation(task.task_id) {
                *per_user.entry(a.author).or_insert(0) += 1;
            }
        }
    }
    ProgressReport {
        campaign_id: campaign,
        total: counts.total(),
        completion_ratio: completion_ratio(&counts),
        counts,
        per_user,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum KappaError {
    #[error("label lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no labels")]
    Empty,
    /// Chance agreement is 1, so κ is 0/0.
    #[error("kappa undefined: chance agreement is 1 (observed agreement {observed})")]
    Degenerate { observed: f64 },
}

/// Cohen's κ = (pₒ − pₑ) / (1 − pₑ).
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, KappaError> {
    let (observed, expected) = kappa_parts(a, b)?;
    if expected >= 1.0 {
        return Err(KappaError::Degenerate { observed });
    }
    Ok((observed - expected) / (1.0 - expected))
}

fn kappa_parts<T: Ord>(a: &[T], b: &[T]) -> Result<(f64, f64), KappaError> {
    if a.len() != b.len() {
        return Err(KappaError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(KappaError::Empty);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    let mut marginals: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for x in a {
        marginals.entry(x).or_default().0 += 1;
    }
    for y in b {
        marginals.entry(y).or_default().1 += 1;
    }
    let expected = marginals.values().map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n)).sum();
    Ok((agree as f64 / n, expected))
}

/// κ as exported: never NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Kappa {
    Defined { kappa: f64, observed: f64, expected: f64 },
    Undefined { observed: f64 },
}

pub fn kappa_report<T: Ord>(a: &[T], b: &[T]) -> Result<Kappa, KappaError> {
    let (observed, expected) = kappa_parts(a, b)?;
    Ok(match cohen_kappa(a, b) {
        Ok(kappa) => Kappa::Defined { kappa, observed, expected },
        Err(KappaError::Degenerate { observed }) => Kappa::Undefined { observed },
        Err(e) => return Err(e),
    })
}

/// Edit distance over Unicode scalar values, unit costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein(ref, hyp) / max(1, len(ref)).
pub fn char_error_rate(reference: &str, hypothesis: &str) -> f64 {
    levenshtein(reference, hypothesis) as f64 / reference.chars().count().max(1) as f64
}

/// Micro-averaged CER of `hyp` against `reference`, aligned by element id;
/// an element missing on one side counts as an empty transcription.
pub fn transcription_cer(reference: &BTreeMap<ElementId, String>, hyp: &BTreeMap<ElementId, String>) -> f64 {
    let ids: BTreeSet<&ElementId> = reference.keys().chain(hyp.keys()).collect();
    let (mut edits, mut len) = (0usize, 0usize);
    for id in ids {
        let r = reference.get(id).map_or("", String::as_str);
        let h = hyp.get(id).map_or("", String::as_str);
        edits += levenshtein(r, h);
        len += r.chars().count();
    }
    edits as f64 / len.max(1) as f64
}

/// 2|A∩B| / (|A|+|B|); two empty sets agree perfectly.
pub fn f1<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64
}

/// |A∩B| / |A∪B|; two empty sets agree perfectly.
pub fn jaccard<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Unordered pairs of elements that share a group.
pub fn co_member_pairs(groups: &[Vec<ElementId>]) -> HashSet<(ElementId, ElementId)> {
    let mut pairs = HashSet::new();
    for members in groups {
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                if a != b {
                    pairs.insert((*a.min(b), *a.max(b)));
                }
            }
        }
    }
    pairs
}

/// Trimmed, whitespace-collapsed, lowercased.
pub fn normalize_value(v: &str) -> String {
    v.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum PairMetric {
    ExactMatch { agree: bool },
    Cer { a_to_b: f64, b_to_a: f64, mean: f64 },
    FieldMatch { matched: usize, total: usize, rate: f64 },
    F1 { f1: f64 },
    Jaccard { jaccard: f64 },
}

impl PairMetric {
    /// Headline value: match indicator, mean CER, match rate, F1 or Jaccard.
    pub fn value(&self) -> f64 {
        match *self {
            PairMetric::ExactMatch { agree } => f64::from(u8::from(agree)),
            PairMetric::Cer { mean, .. } => mean,
            PairMetric::FieldMatch { rate, .. } => rate,
            PairMetric::F1 { f1 } => f1,
            PairMetric::Jaccard { jaccard } => jaccard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub dup_group: DupGroupId,
    pub task_a: TaskId,
    pub task_b: TaskId,
    pub author_a: UserId,
    pub author_b: UserId,
    #[serde(flatten)]
    pub metric: PairMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub campaign_id: CampaignId,
    pub mode: ModeKind,
    /// Dup groups with at least two live annotations.
    pub n_pairs: usize,
    /// Mean of the per-pair headline values; absent without pairs.
    pub mean: Option<f64>,
    /// Classification only: κ over every compared pair.
    pub kappa: Option<Kappa>,
    pub rows: Vec<PairRow>,
}

/// Score of one annotation pair under the campaign's mode.
pub fn compare_payloads(config: &ModeConfig, a: &AnnotationPayload, b: &AnnotationPayload) -> Option<PairMetric> {
    use AnnotationPayload as P;
    Some(match (a, b) {
        (P::Classification { class_id: x }, P::Classification { class_id: y }) => PairMetric::ExactMatch { agree: x == y },
        (P::Transcription { texts: x }, P::Transcription { texts: y }) => {
            let map = |t: &Vec<crate::modes::TextEntry>| t.iter().map(|e| (e.element_id, e.text.clone())).collect();
            let (x, y): (BTreeMap<_, _>, BTreeMap<_, _>) = (map(x), map(y));
            let (ab, ba) = (transcription_cer(&x, &y), transcription_cer(&y, &x));
            PairMetric::Cer { a_to_b: ab, b_to_a: ba, mean: (ab + ba) / 2.0 }
        }
        (P::KeyValue { values: x }, P::KeyValue { values: y }) => {
            let ModeConfig::KeyValue { fields } = config else { return None };
            let get = |m: &BTreeMap<String, String>, k: &str| normalize_value(m.get(k).map_or("", String::as_str));
            let matched = fields.iter().filter(|f| get(x, &f.field_id) == get(y, &f.field_id)).count();
            let total = fields.len();
            let rate = if total == 0 { 1.0 } else { matched as f64 / total as f64 };
            PairMetric::FieldMatch { matched, total, rate }
        }
        (P::Entities { spans: x }, P::Entities { spans: y }) => {
            let (x, y): (HashSet<_>, HashSet<_>) = (x.iter().collect(), y.iter().collect());
            PairMetric::F1 { f1: f1(&x, &y) }
        }
        (P::Structure { zones: x }, P::Structure { zones: y }) => {
            let (x, y): (HashSet<_>, HashSet<_>) = (x.iter().collect(), y.iter().collect());
            PairMetric::Jaccard { jaccard: jaccard(&x, &y) }
        }
        (P::Grouping { groups: x }, P::Grouping { groups: y }) => {
            let members = |g: &Vec<crate::modes::Group>| g.iter().map(|g| g.member_element_ids.clone()).collect::<Vec<_>>();
            PairMetric::Jaccard { jaccard: jaccard(&co_member_pairs(&members(x)), &co_member_pairs(&members(y))) }
        }
        _ => return None,
    })
}

pub(crate) fn agreement_in(st: &State, campaign: CampaignId) -> Result<AgreementReport> {
    let c = campaign_in(st, campaign)?;
    let mut groups: BTreeMap<DupGroupId, Vec<(TaskId, UserId, &AnnotationPayload)>> = BTreeMap::new();
    for task in st.campaign_tasks(campaign) {
        let Some(group) = task.dup_group else { continue };
        if !task.status.has_annotation() {
            continue;
        }
        if let Some(a) = st.live_annotation(task.task_id) {
            groups.entry(group).or_default().push((task.task_id, a.author, &a.payload));
        }
    }
    let mut rows = Vec::new();
    let (mut labels_a, mut labels_b) = (Vec::new(), Vec::new());
    let mut n_pairs = 0;
    for (group, members) in &groups {
        if members.len() < 2 {
            continue;
        }
        n_pairs += 1;
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                let Some(metric) = compare_payloads(&c.config, a.2, b.2) else { continue };
                if let (AnnotationPayload::Classification { class_id: x }, AnnotationPayload::Classification { class_id: y }) =
                    (a.2, b.2)
                {
                    labels_a.push(x.clone());
                    labels_b.push(y.clone());
                }
                rows.push(PairRow { dup_group: *group, task_a: a.0, task_b: b.0, author_a: a.1, author_b: b.1, metric });
            }
        }
    }
    let mean = (!rows.is_empty()).then(|| rows.iter().map(|r| r.metric.value()).sum::<f64>() / rows.len() as f64);
    let kappa = if c.mode == ModeKind::Classification { kappa_report(&labels_a, &labels_b).ok() } else { None };
    Ok(AgreementReport { campaign_id: campaign, mode: c.mode, n_pairs, mean, kappa, rows })
}

/// Median of the durations at or below `cap`; the mean of the two central
/// values for an even count.
pub fn median_with_cap(durations: &[f64], cap: f64) -> Option<f64> {
    let mut kept: Vec<f64> = durations.iter().copied().filter(|d| *d <= cap).collect();
    if kept.is_empty() {
        return None;
    }
    kept.sort_by(f64::total_cmp);
    let mid = kept.len() / 2;
    Some(if kept.len() % 2 == 1 { kept[mid] } else { (kept[mid - 1] + kept[mid]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub campaign_id: CampaignId,
    pub median_seconds: Option<f64>,
    /// Durations that entered the median.
    pub counted: usize,
    /// Durations dropped by the outlier cap.
    pub excluded: usize,
    pub cap_seconds: f64,
}

/// `with_prefill`: `Some(true)` keeps only prefilled tasks, `Some(false)`
/// only blank ones.
pub(crate) fn timing_in(st: &State, campaign: CampaignId, cap_seconds: f64, with_prefill: Option<bool>) -> TimingReport {
    let durations: Vec<f64> = st
        .campaign_tasks(campaign)
        .filter(|t| t.status.has_annotation())
        .filter(|t| with_prefill.is_none_or(|p| t.prefill.is_some() == p))
        .filter_map(|t| Some((t.annotated_at? - t.claimed_at?).num_milliseconds() as f64 / 1000.0))
        .collect();
    let counted = durations.iter().filter(|d| **d <= cap_seconds).count();
    TimingReport {
        campaign_id: campaign,
        median_seconds: median_with_cap(&durations, cap_seconds),
        counted,
        excluded: durations.len() - counted,
        cap_seconds,
    }
}

impl Platform {
    pub fn progress(&self, actor: UserId, campaign: CampaignId) -> Result<ProgressReport> {
        self.read(|st| {
            require(st, campaign_in(st, campaign)?.project_id, actor, Action::ViewProgress)?;
            Ok(progress_in(st, campaign))
        })
    }

    pub fn agreement(&self, actor: UserId, campaign: CampaignId) -> Result<AgreementReport> {
        self.read(|st| {
            require(st, campaign_in(st, campaign)?.project_id, actor, Action::ViewAgreement)?;
            agreement_in(st, campaign)
        })
    }

    pub fn annotation_timing(&self, actor: UserId, campaign: CampaignId, with_prefill: Option<bool>) -> Result<TimingReport> {
        let cap = self.settings.timing_outlier_cap.num_milliseconds() as f64 / 1000.0;
        self.read(|st| {
            require(st, campaign_in(st, campaign)?.project_id, actor, Action::ViewProgress)?;
            Ok(timing_in(st, campaign, cap, with_prefill))
        })
    }
}
