//! In-memory view of the event log: studies, their predictions and verdicts.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use cxr_core::metrics::Decision;
use cxr_core::pipeline::{FeedbackEvent, PredictionSet, StudyRecord, StudyStatus, Triage, Verdicts};
use serde::{Deserialize, Serialize};

use crate::journal::{Event, LogLine};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyEntry {
    pub record: StudyRecord,
    pub received_at: DateTime<Utc>,
    /// Sequence number of the submission; FIFO key.
    pub order: u64,
    /// Every feedback event with its sequence number, never pruned.
    pub feedback: Vec<(u64, FeedbackEvent)>,
    #[serde(skip)]
    pub prediction: Option<PredictionSet>,
    #[serde(skip)]
    pub verdicts: Verdicts,
    /// Last retryable failure, for status polling. Not persisted.
    #[serde(skip)]
    pub last_error: Option<String>,
}

impl StudyEntry {
    pub fn decision(&self) -> Option<Decision> {
        self.prediction.as_ref().map(|p| p.decision)
    }
}

/// Everything the log implies. Serialized as the compaction snapshot;
/// predictions are reloaded from the blob store.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct State {
    pub last_seq: u64,
    pub studies: BTreeMap<String, StudyEntry>,
    pub event_ids: BTreeSet<String>,
}

/// What applying an event did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    Changed,
    /// Already reflected in the state; nothing to do.
    Duplicate,
}

impl State {
    /// Folds one logged event in. Idempotent: re-applying a submission,
    /// a processed result or a feedback `event_id` is a no-op. `load`
    /// resolves a prediction reference to its set.
    pub fn apply(&mut self, line: &LogLine, load: &dyn Fn(&str) -> Option<PredictionSet>) -> Applied {
        self.last_seq = self.last_seq.max(line.seq);
        match &line.event {
            Event::StudySubmitted { study_id, received_at } => {
                if self.studies.contains_key(study_id) {
                    return Applied::Duplicate;
                }
                self.studies.insert(
                    study_id.clone(),
                    StudyEntry {
                        record: StudyRecord {
                            study_id: study_id.clone(),
                            status: StudyStatus::Received,
                            metadata: None,
                            prediction_set_ref: None,
                            triage: Triage::Routine,
                        },
                        received_at: *received_at,
                        order: line.seq,
                        feedback: Vec::new(),
                        prediction: None,
                        verdicts: Verdicts::default(),
                        last_error: None,
                    },
                );
                Applied::Changed
            }
            Event::StudyProcessed { record } => {
                let Some(entry) = self.studies.get_mut(&record.study_id) else {
                    return Applied::Duplicate;
                };
                if entry.record.status != StudyStatus::Received {
                    return Applied::Duplicate;
                }
                entry.prediction = record.prediction_set_ref.as_deref().and_then(load);
                entry.record = record.clone();
                entry.last_error = None;
                Applied::Changed
            }
            Event::Feedback(ev) => {
                if !self.event_ids.insert(ev.event_id.clone()) {
                    return Applied::Duplicate;
                }
                if let Some(entry) = self.studies.get_mut(&ev.study_id) {
                    entry.feedback.push((line.seq, ev.clone()));
                    entry.verdicts.apply(line.seq, ev);
                    promote(entry);
                }
                Applied::Changed
            }
        }
    }

    /// Rebuilds the skipped fields after loading a snapshot.
    pub fn rehydrate(&mut self, load: &dyn Fn(&str) -> Option<PredictionSet>) {
        for entry in self.studies.values_mut() {
            entry.prediction = entry.record.prediction_set_ref.as_deref().and_then(load);
            entry.verdicts = Verdicts::default();
            for (seq, ev) in &entry.feedback {
                entry.verdicts.apply(*seq, ev);
            }
        }
    }

    /// Studies in worklist order: Critical first, then oldest first.
    pub fn ordered(&self) -> Vec<&StudyEntry> {
        let mut v: Vec<&StudyEntry> = self.studies.values().collect();
        v.sort_by_key(|e| (e.record.triage, e.order));
        v
    }

    pub fn feedback_events(&self) -> impl Iterator<Item = &FeedbackEvent> {
        self.studies.values().flat_map(|e| e.feedback.iter().map(|(_, ev)| ev))
    }
}

fn promote(entry: &mut StudyEntry) {
    if entry.record.status != StudyStatus::AwaitingReview {
        return;
    }
    if let Some(p) = &entry.prediction {
        if entry.verdicts.complete(p) {
            entry.record.status = entry
                .record
                .status
                .advance(StudyStatus::Reviewed)
                .expect("AwaitingReview advances to Reviewed");
        }
    }
}
