//! The staged per-study workflow and the study lifecycle around it.

mod feedback;
mod prediction;
mod status;

pub use feedback::{check_feedback, live_metrics, FeedbackError, FeedbackEvent, ReviewedStudy, Verdict, Verdicts};
pub use prediction::{FindingRef, MaskRef, PredictionSet};
pub use status::{IllegalTransition, RejectReason, StudyRecord, StudyStatus, Triage};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{ensemble_average, decide, BackendError, ModelBackend, SanityVerdict};
use crate::detection::{nms, select_top_proposals, Detection, DetectionConfig, ProposalMode};
use crate::ingest::{parse_dicom, to_eight_bit, Anonymizer};
use crate::labels::PathologyLabel;
use crate::metrics::Decision;
use crate::preprocess::{apply_rotation, multi_resolution, rotation_estimate, ResolutionSet};
use crate::segmentation::{EnsembleConfig, SegmentationEnsemble, SegmentationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    /// Transient; the study can be retried.
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("segmentation failed: {0}")]
    Segmentation(#[from] SegmentationError),
}

impl PipelineError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, PipelineError::Backend(_))
    }
}

fn default_critical() -> Vec<PathologyLabel> {
    ["Pneumothorax", "Hydro Pneumothorax", "Pneumoperitoneum"]
        .iter()
        .map(|n| PathologyLabel::resolve(n).expect("critical defaults are canonical labels"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub resolutions: ResolutionSet,
    /// Abnormal when the ensembled abnormal probability reaches this.
    pub decision_threshold: f64,
    pub detection: DetectionConfig,
    pub segmentation: EnsembleConfig,
    /// Labels that make a study Critical.
    pub critical: Vec<PathologyLabel>,
    pub anonymization_salt: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resolutions: ResolutionSet::default(),
            decision_threshold: 0.5,
            detection: DetectionConfig::default(),
            segmentation: EnsembleConfig::default(),
            critical: default_critical(),
            anonymization_salt: "cxr".into(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(format!("decision_threshold {} outside (0, 1)", self.decision_threshold));
        }
        let r = self.resolutions.0;
        if r.contains(&0) || r[0] == r[1] || r[1] == r[2] || r[0] == r[2] {
            return Err("resolutions must be three distinct positive sides".into());
        }
        self.detection.validate()
    }
}

/// Result of one run. `trace` lists every status the study passed through.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub record: StudyRecord,
    pub prediction: Option<PredictionSet>,
    pub trace: Vec<StudyStatus>,
}

/// Stateless apart from configuration and the segmentation networks; safe
/// to share across worker threads.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    anonymizer: Anonymizer,
    segmentation: SegmentationEnsemble,
}

struct Tracker {
    status: StudyStatus,
    trace: Vec<StudyStatus>,
}

impl Tracker {
    fn to(&mut self, next: StudyStatus) {
        self.status = self
            .status
            .advance(next)
            .expect("pipeline only follows legal transitions");
        self.trace.push(next);
    }
}

/// Hex SHA-256 of an upload; the service's idempotency key.
pub fn content_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate().map_err(PipelineError::Config)?;
        let segmentation = SegmentationEnsemble::new(cfg.segmentation.clone())?;
        Ok(Self {
            anonymizer: Anonymizer::new(cfg.anonymization_salt.as_bytes()),
            cfg,
            segmentation,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn is_critical(&self, label: PathologyLabel) -> bool {
        self.cfg.critical.contains(&label)
    }

    /// Runs every stage in order. Sanity failures end the study as
    /// Rejected without touching later stages; backend failures are
    /// returned as retryable errors.
    pub fn run(&self, bytes: &[u8], backend: &dyn ModelBackend) -> Result<PipelineOutcome, PipelineError> {
        let mut t = Tracker {
            status: StudyStatus::Received,
            trace: vec![StudyStatus::Received],
        };
        let mut record = StudyRecord {
            study_id: content_digest(bytes),
            status: StudyStatus::Received,
            metadata: None,
            prediction_set_ref: None,
            triage: Triage::Routine,
        };
        let reject = |mut t: Tracker, mut record: StudyRecord, reason| {
            t.to(StudyStatus::Rejected(reason));
            record.status = t.status;
            Ok(PipelineOutcome {
                record,
                prediction: None,
                trace: t.trace,
            })
        };

        let Ok((meta, raw)) = parse_dicom(bytes) else {
            return reject(t, record, RejectReason::MalformedDicom);
        };
        let meta = self.anonymizer.anonymize(&meta);
        record.study_id = meta.study_id.clone();
        record.metadata = Some(meta);
        let Ok(img) = to_eight_bit(&raw) else {
            return reject(t, record, RejectReason::UnreadablePixels);
        };

        let is_xray = backend.verify_xray(&img)?;
        if !is_xray.passed {
            return reject(t, record, RejectReason::NotXray);
        }
        let is_chest = backend.identify_chest(&img)?;
        if !is_chest.passed {
            return reject(t, record, RejectReason::NotChest);
        }
        let view = backend.classify_view(&img)?;
        let sanity = SanityVerdict {
            is_xray,
            is_chest: Some(is_chest),
            view: Some(view),
        };
        let kp = match backend.detect_keypoints(&img) {
            Ok(kp) => kp,
            Err(BackendError::KeypointsNotFound) => return reject(t, record, RejectReason::KeypointsNotFound),
            Err(e) => return Err(e.into()),
        };
        let Ok(rot) = rotation_estimate(&kp) else {
            return reject(t, record, RejectReason::KeypointsNotFound);
        };
        let Ok(upright) = apply_rotation(&img, rot.angle_degrees) else {
            return reject(t, record, RejectReason::RotationOutOfRange);
        };
        let Ok(scaled) = multi_resolution(&upright, &self.cfg.resolutions) else {
            return reject(t, record, RejectReason::PreprocessFailed);
        };

        let per_resolution = self
            .cfg
            .resolutions
            .iter()
            .zip(&scaled)
            .map(|(side, im)| backend.classify_normal_abnormal(im, side))
            .collect::<Result<Vec<_>, _>>()?;
        let ensemble = ensemble_average(&per_resolution)?;
        let decision = decide(&ensemble, self.cfg.decision_threshold);
        t.to(StudyStatus::Classified);

        let mut detections = Vec::new();
        let mut masks = Vec::new();
        if decision == Decision::Abnormal {
            detections = self.localize(backend.proposals(&upright)?);
            for (i, d) in detections.iter().enumerate() {
                let region = self.segmentation.segment(&upright, d)?;
                masks.push(MaskRef {
                    detection: i,
                    label: d.label,
                    crop: region.crop,
                    rle: region.mask.to_rle(),
                });
            }
        }
        t.to(StudyStatus::Detected);

        let prediction = PredictionSet {
            sanity,
            rotation_applied: -rot.angle_degrees,
            rotation_low_confidence: rot.low_confidence,
            per_resolution,
            ensemble,
            decision,
            detections,
            masks,
        };
        if prediction.detections.iter().any(|d| self.is_critical(d.label)) {
            record.triage = Triage::Critical;
        }
        record.prediction_set_ref = Some(prediction.digest());
        t.to(StudyStatus::AwaitingReview);
        record.status = t.status;
        Ok(PipelineOutcome {
            record,
            prediction: Some(prediction),
            trace: t.trace,
        })
    }

    /// Inference-time geometry: top-k proposals, per-label suppression,
    /// then the score threshold.
    pub fn localize(&self, proposals: Vec<Detection>) -> Vec<Detection> {
        let cfg = &self.cfg.detection;
        let top = select_top_proposals(&proposals, ProposalMode::Infer, cfg);
        nms(&top, cfg.nms_threshold)
            .into_iter()
            .filter(|d| d.score >= cfg.score_threshold)
            .collect()
    }
}

/// One-shot convenience around [`Pipeline::run`].
pub fn run_pipeline(
    bytes: &[u8],
    cfg: &PipelineConfig,
    backend: &dyn ModelBackend,
) -> Result<PipelineOutcome, PipelineError> {
    Pipeline::new(cfg.clone())?.run(bytes, backend)
}
