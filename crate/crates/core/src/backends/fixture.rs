use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, ModelBackend, Stage, ViewCall};
use crate::detection::Detection;
use crate::image::{Image8, ImageDigest};
use crate::preprocess::KeypointSet;

/// One line of a fixture file:
///
/// ```json
/// {"image_digest": "<sha256 hex>", "stage": "classify@224", "output": [0.1, 0.9]}
/// ```
///
/// `output` depends on `stage`: a number for `verify_xray` and
/// `identify_chest`, `{"view": "PA"|"AP", "score": s}` for `classify_view`,
/// a keypoint set for `keypoints`, a two-element array for `classify@<side>`
/// and a list of detections for `propose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureRecord {
    pub image_digest: ImageDigest,
    pub stage: Stage,
    pub output: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageOutput {
    Score(f64),
    View(ViewCall),
    Keypoints(KeypointSet),
    Probs(Vec<f64>),
    Detections(Vec<Detection>),
}

impl StageOutput {
    pub fn parse(stage: Stage, value: serde_json::Value) -> Result<Self, String> {
        let e = |err: serde_json::Error| format!("{stage} output: {err}");
        Ok(match stage {
            Stage::VerifyXray | Stage::IdentifyChest => StageOutput::Score(serde_json::from_value(value).map_err(e)?),
            Stage::ClassifyView => StageOutput::View(serde_json::from_value(value).map_err(e)?),
            Stage::Keypoints => StageOutput::Keypoints(serde_json::from_value(value).map_err(e)?),
            Stage::Classify(_) => StageOutput::Probs(serde_json::from_value(value).map_err(e)?),
            Stage::Propose => StageOutput::Detections(serde_json::from_value(value).map_err(e)?),
        })
    }

    pub fn to_value(&self) -> serde_json::Value {
        let v = match self {
            StageOutput::Score(s) => serde_json::to_value(s),
            StageOutput::View(v) => serde_json::to_value(v),
            StageOutput::Keypoints(k) => serde_json::to_value(k),
            StageOutput::Probs(p) => serde_json::to_value(p),
            StageOutput::Detections(d) => serde_json::to_value(d),
        };
        v.expect("stage outputs serialize to JSON")
    }
}

/// Replays recorded outputs keyed by `(image digest, stage)`.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    name: String,
    entries: HashMap<(ImageDigest, Stage), StageOutput>,
}

impl FixtureBackend {
    pub fn load(name: &str, path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Io(format!("{}: {e}", path.display())))?;
        Self::from_ndjson(name, &text)
    }

    /// Blank lines are ignored. Repeated keys must carry identical outputs.
    pub fn from_ndjson(name: &str, text: &str) -> Result<Self, BackendError> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fail = |reason: String| BackendError::Fixture {
                line: line_no,
                reason,
            };
            let rec: FixtureRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
            let out = StageOutput::parse(rec.stage, rec.output).map_err(fail)?;
            let key = (rec.image_digest, rec.stage);
            if let Some(prev) = entries.get(&key) {
                if *prev != out {
                    return Err(fail(format!("conflicting output for {} {}", key.0, key.1)));
                }
            } else {
                entries.insert(key, out);
            }
        }
        Ok(Self {
            name: name.to_string(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, img: &Image8, stage: Stage) -> Option<&StageOutput> {
        self.entries.get(&(img.digest(), stage))
    }

    fn miss(&self, img: &Image8, stage: Stage) -> BackendError {
        BackendError::Unavailable(format!("no fixture for {stage} on {}", img.digest()))
    }

    fn wrong(stage: Stage) -> BackendError {
        BackendError::InvalidOutput(format!("fixture output kind does not match {stage}"))
    }
}

impl ModelBackend for FixtureBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn xray_score(&self, img: &Image8) -> Result<f64, BackendError> {
        match self.lookup(img, Stage::VerifyXray) {
            Some(StageOutput::Score(s)) => Ok(*s),
            Some(_) => Err(Self::wrong(Stage::VerifyXray)),
            None => Err(self.miss(img, Stage::VerifyXray)),
        }
    }

    fn chest_score(&self, img: &Image8) -> Result<f64, BackendError> {
        match self.lookup(img, Stage::IdentifyChest) {
            Some(StageOutput::Score(s)) => Ok(*s),
            Some(_) => Err(Self::wrong(Stage::IdentifyChest)),
            None => Err(self.miss(img, Stage::IdentifyChest)),
        }
    }

    fn view(&self, img: &Image8) -> Result<ViewCall, BackendError> {
        match self.lookup(img, Stage::ClassifyView) {
            Some(StageOutput::View(v)) => Ok(*v),
            Some(_) => Err(Self::wrong(Stage::ClassifyView)),
            None => Err(self.miss(img, Stage::ClassifyView)),
        }
    }

    fn keypoints(&self, img: &Image8) -> Result<KeypointSet, BackendError> {
        match self.lookup(img, Stage::Keypoints) {
            Some(StageOutput::Keypoints(k)) => Ok(k.clone()),
            Some(_) => Err(Self::wrong(Stage::Keypoints)),
            None => Err(BackendError::KeypointsNotFound),
        }
    }

    fn class_probs(&self, img: &Image8, side: usize) -> Result<Vec<f64>, BackendError> {
        let stage = Stage::Classify(side);
        match self.lookup(img, stage) {
            Some(StageOutput::Probs(p)) => Ok(p.clone()),
            Some(_) => Err(Self::wrong(stage)),
            None => Err(self.miss(img, stage)),
        }
    }

    fn proposals(&self, img: &Image8) -> Result<Vec<Detection>, BackendError> {
        match self.lookup(img, Stage::Propose) {
            Some(StageOutput::Detections(d)) => Ok(d.clone()),
            Some(_) => Err(Self::wrong(Stage::Propose)),
            None => Err(self.miss(img, Stage::Propose)),
        }
    }
}
