//! The model-backend contract for every learned stage, with a seeded
//! tiny reference implementation and a fixture replay implementation.

mod fixture;
mod recording;
mod tiny;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::Detection;
use crate::image::Image8;
use crate::metrics::Decision;
use crate::preprocess::{KeypointSet, ResolutionSet};

pub use fixture::{FixtureBackend, FixtureRecord, StageOutput};
pub use recording::{RecordingBackend, ScriptedBackend, StudyScript};
pub use tiny::{TinyReference, TinyVit};

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("no keypoints found")]
    KeypointsNotFound,
    #[error("resolution {0} is not one of the configured classifier inputs")]
    UnsupportedResolution(usize),
    #[error("expected {expected} probability vectors, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("backend produced an invalid output: {0}")]
    InvalidOutput(String),
    #[error("fixture line {line}: {reason}")]
    Fixture { line: usize, reason: String },
    #[error("reading fixture: {0}")]
    Io(String),
}

/// Class probabilities, validated to lie in `[0, 1]` and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector(Vec<f64>);

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = BackendError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.0
    }
}

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self, BackendError> {
        if probs.is_empty() {
            return Err(BackendError::InvalidProbabilities("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(BackendError::InvalidProbabilities(format!(
                "{p} outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(BackendError::InvalidProbabilities(format!(
                "sum {sum} is not 1"
            )));
        }
        Ok(Self(probs))
    }

    /// Two-class vector ordered `[normal, abnormal]`.
    pub fn binary(normal: f64, abnormal: f64) -> Result<Self, BackendError> {
        Self::new(vec![normal, abnormal])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `p[0]` of a two-class vector.
    pub fn normal(&self) -> f64 {
        self.0[0]
    }

    /// `p[1]` of a two-class vector.
    pub fn abnormal(&self) -> f64 {
        self.0[1]
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Mean of three values, rounded once. The inputs are sorted first so the
/// result does not depend on their order, the sum is carried with its
/// exact rounding error and the division remainder is folded back in.
fn mean3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    let (s1, e1) = two_sum(v[0], v[1]);
    let (s, e2) = two_sum(s1, v[2]);
    let q = s / 3.0;
    let r = (-q).mul_add(3.0, s);
    q + (r + e1 + e2) / 3.0
}

/// Elementwise mean of exactly three per-resolution vectors.
pub fn ensemble_average(per_resolution: &[ProbabilityVector]) -> Result<ProbabilityVector, BackendError> {
    let [a, b, c] = per_resolution else {
        return Err(BackendError::ArityMismatch {
            expected: 3,
            found: per_resolution.len(),
        });
    };
    if a.len() != b.len() || a.len() != c.len() {
        return Err(BackendError::InvalidProbabilities(
            "vectors differ in length".into(),
        ));
    }
    let mean = (0..a.len())
        .map(|i| mean3([a.0[i], b.0[i], c.0[i]]).clamp(0.0, 1.0))
        .collect();
    ProbabilityVector::new(mean)
}

/// Abnormal iff `p[abnormal] >= threshold`; an exact tie is Abnormal.
pub fn decide(p: &ProbabilityVector, threshold: f64) -> Decision {
    if p.abnormal() >= threshold {
        Decision::Abnormal
    } else {
        Decision::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum View {
    PA,
    AP,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::PA => "PA",
            View::AP => "AP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    pub score: f64,
}

impl Check {
    /// Passes at `score >= 0.5`.
    pub fn from_score(score: f64) -> Result<Self, BackendError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(BackendError::InvalidOutput(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            passed: score >= 0.5,
            score,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewCall {
    pub view: View,
    pub score: f64,
}

/// Results of the three sanity stages. Later fields are absent when an
/// earlier stage rejected the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanityVerdict {
    pub is_xray: Check,
    pub is_chest: Option<Check>,
    pub view: Option<ViewCall>,
}

/// Learned stage identifiers, also used as fixture keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    VerifyXray,
    IdentifyChest,
    ClassifyView,
    Keypoints,
    Classify(usize),
    Propose,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::VerifyXray => f.write_str("verify_xray"),
            Stage::IdentifyChest => f.write_str("identify_chest"),
            Stage::ClassifyView => f.write_str("classify_view"),
            Stage::Keypoints => f.write_str("keypoints"),
            Stage::Classify(side) => write!(f, "classify@{side}"),
            Stage::Propose => f.write_str("propose"),
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "verify_xray" => Stage::VerifyXray,
            "identify_chest" => Stage::IdentifyChest,
            "classify_view" => Stage::ClassifyView,
            "keypoints" => Stage::Keypoints,
            "propose" => Stage::Propose,
            other => {
                let side = other
                    .strip_prefix("classify@")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| format!("unknown stage {other:?}"))?;
                Stage::Classify(side)
            }
        })
    }
}

impl Serialize for Stage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Stage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Raw per-stage model outputs. Implementations are immutable after
/// construction and may be called concurrently. Callers normally go through
/// the provided methods, which enforce each stage's postconditions.
pub trait ModelBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Probability that the image is a radiograph.
    fn xray_score(&self, img: &Image8) -> Result<f64, BackendError>;

    /// Probability that the radiograph shows a chest.
    fn chest_score(&self, img: &Image8) -> Result<f64, BackendError>;

    fn view(&self, img: &Image8) -> Result<ViewCall, BackendError>;

    fn keypoints(&self, img: &Image8) -> Result<KeypointSet, BackendError>;

    /// `[normal, abnormal]` at one square resolution.
    fn class_probs(&self, img: &Image8, side: usize) -> Result<Vec<f64>, BackendError>;

    /// Scored, labelled region proposals in image pixels, before suppression.
    fn proposals(&self, img: &Image8) -> Result<Vec<Detection>, BackendError>;

    fn resolutions(&self) -> ResolutionSet {
        ResolutionSet::default()
    }

    fn verify_xray(&self, img: &Image8) -> Result<Check, BackendError> {
        Check::from_score(self.xray_score(img)?)
    }

    fn identify_chest(&self, img: &Image8) -> Result<Check, BackendError> {
        Check::from_score(self.chest_score(img)?)
    }

    fn classify_view(&self, img: &Image8) -> Result<ViewCall, BackendError> {
        let v = self.view(img)?;
        if !(0.5..=1.0).contains(&v.score) {
            return Err(BackendError::InvalidOutput(format!(
                "view score {} below 0.5 for the reported class",
                v.score
            )));
        }
        Ok(v)
    }

    fn detect_keypoints(&self, img: &Image8) -> Result<KeypointSet, BackendError> {
        let kp = self.keypoints(img)?;
        kp.validate().map_err(|_| BackendError::KeypointsNotFound)?;
        if !kp.within_bounds(img.width(), img.height()) {
            return Err(BackendError::InvalidOutput("keypoint outside the image".into()));
        }
        Ok(kp)
    }

    fn classify_normal_abnormal(
        &self,
        img: &Image8,
        side: usize,
    ) -> Result<ProbabilityVector, BackendError> {
        if !self.resolutions().contains(side) {
            return Err(BackendError::UnsupportedResolution(side));
        }
        if img.width() != side || img.height() != side {
            return Err(BackendError::InvalidOutput(format!(
                "classifier input is {}x{}, expected {side}x{side}",
                img.width(),
                img.height()
            )));
        }
        let p = ProbabilityVector::new(self.class_probs(img, side)?)?;
        if p.len() != 2 {
            return Err(BackendError::InvalidProbabilities(format!(
                "expected 2 classes, got {}",
                p.len()
            )));
        }
        Ok(p)
    }
}

/// Which backend a service instance runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BackendDescriptor {
    TinyReference { name: String, seed: u64 },
    Fixture { name: String, fixture_path: PathBuf },
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        BackendDescriptor::TinyReference {
            name: "tiny".into(),
            seed: 42,
        }
    }
}

impl BackendDescriptor {
    pub fn name(&self) -> &str {
        match self {
            BackendDescriptor::TinyReference { name, .. } | BackendDescriptor::Fixture { name, .. } => name,
        }
    }

    /// Constructs the backend. Fixture files are read once, here.
    pub fn build(&self) -> Result<Arc<dyn ModelBackend>, BackendError> {
        Ok(match self {
            BackendDescriptor::TinyReference { name, seed } => Arc::new(TinyReference::new(name, *seed)),
            BackendDescriptor::Fixture { name, fixture_path } => {
                Arc::new(FixtureBackend::load(name, fixture_path)?)
            }
        })
    }
}
