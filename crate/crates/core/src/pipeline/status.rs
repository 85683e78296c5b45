use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::StudyMetadata;

/// Machine-readable reasons a study leaves the pipeline early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MalformedDicom,
    UnreadablePixels,
    NotXray,
    NotChest,
    KeypointsNotFound,
    RotationOutOfRange,
    PreprocessFailed,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::MalformedDicom => "malformed_dicom",
            RejectReason::UnreadablePixels => "unreadable_pixels",
            RejectReason::NotXray => "not_xray",
            RejectReason::NotChest => "not_chest",
            RejectReason::KeypointsNotFound => "keypoints_not_found",
            RejectReason::RotationOutOfRange => "rotation_out_of_range",
            RejectReason::PreprocessFailed => "preprocess_failed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason")]
pub enum StudyStatus {
    Received,
    Rejected(RejectReason),
    Classified,
    Detected,
    AwaitingReview,
    Reviewed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transition {from:?} -> {to:?}")]
pub struct IllegalTransition {
    pub from: StudyStatus,
    pub to: StudyStatus,
}

impl StudyStatus {
    /// Name without the reject reason, as used by worklist filters.
    pub fn name(self) -> &'static str {
        match self {
            StudyStatus::Received => "Received",
            StudyStatus::Rejected(_) => "Rejected",
            StudyStatus::Classified => "Classified",
            StudyStatus::Detected => "Detected",
            StudyStatus::AwaitingReview => "AwaitingReview",
            StudyStatus::Reviewed => "Reviewed",
        }
    }

    /// `Received -> {Rejected | Classified -> Detected -> AwaitingReview -> Reviewed}`.
    pub fn can_advance(self, to: StudyStatus) -> bool {
        use StudyStatus::*;
        matches!(
            (self, to),
            (Received, Rejected(_))
                | (Received, Classified)
                | (Classified, Detected)
                | (Detected, AwaitingReview)
                | (AwaitingReview, Reviewed)
        )
    }

    pub fn advance(self, to: StudyStatus) -> Result<StudyStatus, IllegalTransition> {
        if self.can_advance(to) {
            Ok(to)
        } else {
            Err(IllegalTransition { from: self, to })
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, StudyStatus::Rejected(_) | StudyStatus::Reviewed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Triage {
    Critical,
    Routine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    pub status: StudyStatus,
    /// Anonymized; absent when the upload could not be parsed.
    pub metadata: Option<StudyMetadata>,
    /// Content digest of the serialized prediction set, once there is one.
    pub prediction_set_ref: Option<String>,
    pub triage: Triage,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use StudyStatus::*;

    fn all() -> Vec<StudyStatus> {
        vec![
            Received,
            Rejected(RejectReason::NotXray),
            Classified,
            Detected,
            AwaitingReview,
            Reviewed,
        ]
    }

    /// Reference relation as an explicit edge list.
    const EDGES: [(&str, &str); 5] = [
        ("Received", "Rejected"),
        ("Received", "Classified"),
        ("Classified", "Detected"),
        ("Detected", "AwaitingReview"),
        ("AwaitingReview", "Reviewed"),
    ];

    #[test]
    fn relation_matches_edge_list() {
        for a in all() {
            for b in all() {
                let expected = EDGES.contains(&(a.name(), b.name()));
                assert_eq!(a.can_advance(b), expected, "{a:?} -> {b:?}");
            }
        }
    }

    #[test]
    fn serde_shape() {
        let s = serde_json::to_string(&Rejected(RejectReason::NotXray)).unwrap();
        assert_eq!(s, r#"{"state":"Rejected","reason":"not_xray"}"#);
        assert_eq!(serde_json::to_string(&Reviewed).unwrap(), r#"{"state":"Reviewed"}"#);
    }

    proptest! {
        /// Random attempted transitions: the state only ever moves along an
        /// edge, rejected attempts leave it unchanged, and terminal states
        /// never change again.
        #[test]
        fn random_sequences_stay_legal(steps in prop::collection::vec(0usize..6, 0..40)) {
            let states = all();
            let mut s = Received;
            let mut path = vec![s];
            for i in steps {
                let to = states[i];
                match s.advance(to) {
                    Ok(next) => {
                        prop_assert!(EDGES.contains(&(s.name(), next.name())));
                        s = next;
                        path.push(s);
                    }
                    Err(e) => prop_assert_eq!(e, IllegalTransition { from: s, to }),
                }
            }
            if let Some(pos) = path.iter().position(|p| p.is_terminal()) {
                prop_assert_eq!(pos, path.len() - 1);
            }
        }
    }
}
