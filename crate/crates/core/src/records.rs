//! Line-delimited JSON files exchanged by the CLI: pipeline output, reference
//! reads and evaluation records.

use std::collections::HashMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Annotation, Decision, EvalRecord};
use crate::pipeline::{PredictionSet, StudyRecord, StudyStatus};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct RecordError {
    pub line: usize,
    pub reason: String,
}

/// One study's pipeline result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Input file name, without directories.
    pub file: String,
    pub study: StudyRecord,
    pub prediction: Option<PredictionSet>,
}

/// The reference read for one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub study_id: String,
    pub reference: Decision,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

/// Parses one JSON value per non-blank line.
pub fn parse_ndjson<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, RecordError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RecordError {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn to_ndjson<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Evaluation input assembled from a run and its references.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Joined {
    pub records: Vec<EvalRecord>,
    /// Studies that never produced a prediction.
    pub rejected: usize,
    /// Predicted studies with no reference read.
    pub unmatched: Vec<String>,
}

pub fn join_references(runs: &[RunRecord], refs: &[ReferenceRecord]) -> Joined {
    let by_id: HashMap<&str, &ReferenceRecord> = refs.iter().map(|r| (r.study_id.as_str(), r)).collect();
    let mut out = Joined::default();
    for run in runs {
        let Some(p) = &run.prediction else {
            if matches!(run.study.status, StudyStatus::Rejected(_)) {
                out.rejected += 1;
            }
            continue;
        };
        let Some(reference) = by_id.get(run.study.study_id.as_str()) else {
            out.unmatched.push(run.study.study_id.clone());
            continue;
        };
        let mut r = EvalRecord::new(&run.study.study_id, p.decision, p.ensemble.abnormal(), reference.reference);
        r.detections = p.detections.clone();
        r.annotations = reference.annotations.clone();
        if let Some(m) = &run.study.metadata {
            r.age_band = m.age_band();
            r.sex = Some(m.sex);
            r.manufacturer = Some(m.manufacturer);
            r.machine_type = Some(m.machine_type);
        }
        out.records.push(r);
    }
    out
}
