use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{ProbabilityVector, SanityVerdict};
use crate::detection::{BBox, Detection};
use crate::labels::PathologyLabel;
use crate::metrics::Decision;
use crate::segmentation::Rle;

/// A segmentation mask for one detection, at crop resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRef {
    /// Index into `PredictionSet::detections`.
    pub detection: usize,
    pub label: PathologyLabel,
    /// Crop rectangle in corrected-image pixels the mask covers.
    pub crop: BBox,
    pub rle: Rle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub sanity: SanityVerdict,
    /// Degrees the image was rotated by to make it upright.
    pub rotation_applied: f64,
    /// Spine axis disagreed with the clavicle line.
    pub rotation_low_confidence: bool,
    /// Classifier outputs in resolution order.
    pub per_resolution: Vec<ProbabilityVector>,
    pub ensemble: ProbabilityVector,
    pub decision: Decision,
    pub detections: Vec<Detection>,
    pub masks: Vec<MaskRef>,
}

impl PredictionSet {
    /// Canonical serialization; equal sets give identical bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("prediction sets serialize")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Every reviewable finding: the classification, then each detection.
    pub fn findings(&self) -> Vec<FindingRef> {
        std::iter::once(FindingRef::Classification)
            .chain((0..self.detections.len()).map(FindingRef::Detection))
            .collect()
    }

    pub fn has_finding(&self, f: FindingRef) -> bool {
        match f {
            FindingRef::Classification => true,
            FindingRef::Detection(i) => i < self.detections.len(),
        }
    }

    /// Checks the structural invariants: no localisation on a Normal call and
    /// every mask tied to a detection of the same label.
    pub fn check(&self) -> Result<(), String> {
        if self.decision == Decision::Normal && (!self.detections.is_empty() || !self.masks.is_empty()) {
            return Err("normal decision carries detections or masks".into());
        }
        for m in &self.masks {
            match self.detections.get(m.detection) {
                Some(d) if d.label == m.label => {}
                _ => return Err(format!("mask for detection {} has no matching detection", m.detection)),
            }
        }
        Ok(())
    }
}

/// What a verdict is about. Serialized as `classification` or `detection:<i>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FindingRef {
    Classification,
    Detection(usize),
}

impl fmt::Display for FindingRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FindingRef::Classification => f.write_str("classification"),
            FindingRef::Detection(i) => write!(f, "detection:{i}"),
        }
    }
}

impl FromStr for FindingRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "classification" {
            return Ok(FindingRef::Classification);
        }
        s.strip_prefix("detection:")
            .and_then(|i| i.parse().ok())
            .map(FindingRef::Detection)
            .ok_or_else(|| format!("invalid finding reference {s:?}"))
    }
}

impl Serialize for FindingRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FindingRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
