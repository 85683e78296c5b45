use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FindingRef, PredictionSet, StudyRecord, StudyStatus};
use crate::labels::PathologyLabel;
use crate::metrics::{
    auc, classification_summary, confusion, subgroup_report, Decision, Dimension, EvalConfig,
    EvalRecord, MetricReport, PathologyRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Rejected,
}

/// One radiologist verdict on one finding. Never deleted; a later event
/// from the same reviewer on the same finding supersedes it for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    /// Client-generated; replays and retries are deduplicated on it.
    pub event_id: String,
    pub study_id: String,
    pub finding: FindingRef,
    pub verdict: Verdict,
    pub reviewer_id: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeedbackError {
    #[error("study has no finding {0}")]
    UnknownFinding(FindingRef),
    #[error("study in state {} does not accept feedback", .0.name())]
    IllegalState(StudyStatus),
}

/// Whether `finding` on this study may receive a verdict now.
pub fn check_feedback(
    record: &StudyRecord,
    prediction: Option<&PredictionSet>,
    finding: FindingRef,
) -> Result<(), FeedbackError> {
    if !matches!(record.status, StudyStatus::AwaitingReview | StudyStatus::Reviewed) {
        return Err(FeedbackError::IllegalState(record.status));
    }
    match prediction {
        Some(p) if p.has_finding(finding) => Ok(()),
        _ => Err(FeedbackError::UnknownFinding(finding)),
    }
}

/// Effective verdicts of one study: the latest per (finding, reviewer).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Verdicts {
    by_finding: BTreeMap<FindingRef, BTreeMap<String, (u64, Verdict)>>,
}

impl Verdicts {
    /// `order` is the event's position in the log; higher wins.
    pub fn apply(&mut self, order: u64, ev: &FeedbackEvent) {
        let slot = self
            .by_finding
            .entry(ev.finding)
            .or_default()
            .entry(ev.reviewer_id.clone())
            .or_insert((order, ev.verdict));
        if order >= slot.0 {
            *slot = (order, ev.verdict);
        }
    }

    /// The most recent effective verdict across reviewers.
    pub fn consensus(&self, finding: FindingRef) -> Option<Verdict> {
        self.by_finding
            .get(&finding)?
            .values()
            .max_by_key(|(order, _)| *order)
            .map(|(_, v)| *v)
    }

    pub fn reviewers(&self, finding: FindingRef) -> usize {
        self.by_finding.get(&finding).map_or(0, BTreeMap::len)
    }

    /// Every finding has at least one verdict.
    pub fn complete(&self, prediction: &PredictionSet) -> bool {
        prediction.findings().iter().all(|f| self.reviewers(*f) > 0)
    }
}

/// A study as seen by live reporting.
#[derive(Debug, Clone, Copy)]
pub struct ReviewedStudy<'a> {
    pub record: &'a StudyRecord,
    pub prediction: &'a PredictionSet,
    pub verdicts: &'a Verdicts,
}

/// Post-deployment metrics from accumulated feedback. Accepted counts as
/// agreement and Rejected as disagreement: per-pathology agreement goes in
/// the precision column, and the classification reference is the
/// prediction itself when accepted and its opposite when rejected. Only
/// Reviewed studies contribute.
pub fn live_metrics(studies: &[ReviewedStudy<'_>], cfg: &EvalConfig) -> MetricReport {
    let mut per_label: BTreeMap<PathologyLabel, (u64, u64)> = BTreeMap::new();
    let mut records = Vec::new();
    for s in studies.iter().filter(|s| s.record.status == StudyStatus::Reviewed) {
        let p = s.prediction;
        for (i, d) in p.detections.iter().enumerate() {
            if let Some(v) = s.verdicts.consensus(FindingRef::Detection(i)) {
                let e = per_label.entry(d.label).or_default();
                e.1 += 1;
                if v == Verdict::Accepted {
                    e.0 += 1;
                }
            }
        }
        if let Some(v) = s.verdicts.consensus(FindingRef::Classification) {
            let reference = match v {
                Verdict::Accepted => p.decision,
                Verdict::Rejected => p.decision.flip(),
            };
            let mut r = EvalRecord::new(&s.record.study_id, p.decision, p.ensemble.abnormal(), reference);
            if let Some(m) = &s.record.metadata {
                r.age_band = m.age_band();
                r.sex = Some(m.sex);
                r.manufacturer = Some(m.manufacturer);
                r.machine_type = Some(m.machine_type);
            }
            records.push(r);
        }
    }
    let pathologies = per_label
        .into_iter()
        .map(|(label, (accepted, total))| PathologyRow {
            label,
            auc: None,
            precision: Some(100.0 * accepted as f64 / total as f64),
            recall: None,
        })
        .collect();
    let classification = confusion(&records, Decision::Abnormal).ok().map(|c| {
        let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
        let truth: Vec<bool> = records.iter().map(|r| r.reference == Decision::Abnormal).collect();
        classification_summary(c, auc(&scores, &truth).ok(), cfg)
    });
    let subgroups = if records.is_empty() {
        Vec::new()
    } else {
        Dimension::ALL.iter().map(|&d| subgroup_report(&records, d)).collect()
    };
    MetricReport {
        pathologies,
        classification,
        subgroups,
    }
}
