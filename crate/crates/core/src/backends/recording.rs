use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, FixtureRecord, ModelBackend, Stage, StageOutput, ViewCall};
use crate::detection::Detection;
use crate::image::Image8;
use crate::preprocess::{KeypointSet, ResolutionSet};

/// Fixed outputs for a single study, whatever image each stage receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyScript {
    pub xray: f64,
    pub chest: f64,
    pub view: ViewCall,
    /// `None` makes keypoint detection fail.
    pub keypoints: Option<KeypointSet>,
    /// `[normal, abnormal]` per resolution, in resolution order.
    pub probs: Vec<[f64; 2]>,
    pub proposals: Vec<Detection>,
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    script: StudyScript,
    resolutions: ResolutionSet,
}

impl ScriptedBackend {
    pub fn new(script: StudyScript, resolutions: ResolutionSet) -> Self {
        Self { script, resolutions }
    }
}

impl ModelBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn xray_score(&self, _: &Image8) -> Result<f64, BackendError> {
        Ok(self.script.xray)
    }

    fn chest_score(&self, _: &Image8) -> Result<f64, BackendError> {
        Ok(self.script.chest)
    }

    fn view(&self, _: &Image8) -> Result<ViewCall, BackendError> {
        Ok(self.script.view)
    }

    fn keypoints(&self, _: &Image8) -> Result<KeypointSet, BackendError> {
        self.script.keypoints.clone().ok_or(BackendError::KeypointsNotFound)
    }

    fn class_probs(&self, _: &Image8, side: usize) -> Result<Vec<f64>, BackendError> {
        let i = self
            .resolutions
            .iter()
            .position(|s| s == side)
            .ok_or(BackendError::UnsupportedResolution(side))?;
        let p = self.script.probs.get(i).or(self.script.probs.last());
        p.map(|p| p.to_vec())
            .ok_or_else(|| BackendError::Unavailable("script has no class probabilities".into()))
    }

    fn proposals(&self, _: &Image8) -> Result<Vec<Detection>, BackendError> {
        Ok(self.script.proposals.clone())
    }

    fn resolutions(&self) -> ResolutionSet {
        self.resolutions
    }
}

/// Passes calls through to `inner` and records every successful raw output
/// as a fixture line keyed by the digest of the image it was given.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<FixtureRecord>>,
}

impl<B: ModelBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn into_records(self) -> Vec<FixtureRecord> {
        self.log.into_inner().unwrap_or_else(|e| e.into_inner())
    }

    fn note<T>(&self, img: &Image8, stage: Stage, r: Result<T, BackendError>, wrap: impl Fn(&T) -> StageOutput) -> Result<T, BackendError> {
        if let Ok(v) = &r {
            let rec = FixtureRecord {
                image_digest: img.digest(),
                stage,
                output: wrap(v).to_value(),
            };
            self.log.lock().unwrap_or_else(|e| e.into_inner()).push(rec);
        }
        r
    }
}

impl<B: ModelBackend> ModelBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn xray_score(&self, img: &Image8) -> Result<f64, BackendError> {
        self.note(img, Stage::VerifyXray, self.inner.xray_score(img), |s| StageOutput::Score(*s))
    }

    fn chest_score(&self, img: &Image8) -> Result<f64, BackendError> {
        self.note(img, Stage::IdentifyChest, self.inner.chest_score(img), |s| StageOutput::Score(*s))
    }

    fn view(&self, img: &Image8) -> Result<ViewCall, BackendError> {
        self.note(img, Stage::ClassifyView, self.inner.view(img), |v| StageOutput::View(*v))
    }

    fn keypoints(&self, img: &Image8) -> Result<KeypointSet, BackendError> {
        self.note(img, Stage::Keypoints, self.inner.keypoints(img), |k| StageOutput::Keypoints(k.clone()))
    }

    fn class_probs(&self, img: &Image8, side: usize) -> Result<Vec<f64>, BackendError> {
        self.note(img, Stage::Classify(side), self.inner.class_probs(img, side), |p| StageOutput::Probs(p.clone()))
    }

    fn proposals(&self, img: &Image8) -> Result<Vec<Detection>, BackendError> {
        self.note(img, Stage::Propose, self.inner.proposals(img), |d| StageOutput::Detections(d.clone()))
    }

    fn resolutions(&self) -> ResolutionSet {
        self.inner.resolutions()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{FixtureBackend, View};

    #[test]
    fn recorded_lines_replay_identically() {
        let script = StudyScript {
            xray: 0.97,
            chest: 0.88,
            view: ViewCall { view: View::AP, score: 0.7 },
            keypoints: None,
            probs: vec![[0.25, 0.75]],
            proposals: vec![],
        };
        let rec = RecordingBackend::new(ScriptedBackend::new(script, ResolutionSet::default()));
        let img = Image8::filled(4, 4, 9).unwrap();
        let a = rec.verify_xray(&img).unwrap();
        let v = rec.classify_view(&img).unwrap();
        let p = rec.class_probs(&img, 320).unwrap();
        assert!(rec.detect_keypoints(&img).is_err());
        let lines: Vec<String> = rec
            .into_records()
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        let f = FixtureBackend::from_ndjson("f", &lines.join("\n")).unwrap();
        assert_eq!(f.verify_xray(&img).unwrap(), a);
        assert_eq!(f.classify_view(&img).unwrap(), v);
        assert_eq!(f.class_probs(&img, 320).unwrap(), p);
        assert_eq!(f.detect_keypoints(&img), Err(BackendError::KeypointsNotFound));
    }
}
