//! Detection geometry: anchors, IoU, non-maximum suppression, proposal
//! selection, box delta coding and the smooth-L1 regression loss.

mod anchors;
mod bbox;
mod deltas;
mod loss;
mod nms;

pub use anchors::{generate_anchors, Anchor};
pub use bbox::{iou, BBox, Detection, GeometryError};
pub use deltas::{decode_deltas, encode_deltas, Deltas};
pub use loss::{smooth_l1, smooth_l1_grad};
pub use nms::{nms, select_top_proposals, ProposalMode};

use serde::{Deserialize, Serialize};

/// Regression target normalisers `(dx, dy, dw, dh)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaWeights {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Default for DeltaWeights {
    fn default() -> Self {
        Self {
            x: 0.1,
            y: 0.1,
            w: 0.2,
            h: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Square-root anchor areas in pixels.
    pub anchor_sizes: Vec<f64>,
    /// Height over width.
    pub aspect_ratios: Vec<f64>,
    pub nms_threshold: f64,
    pub top_proposals_train: usize,
    pub top_proposals_infer: usize,
    pub delta_weights: DeltaWeights,
    pub smooth_l1_beta: f64,
    /// Minimum score for a final detection to be emitted.
    pub score_threshold: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            anchor_sizes: vec![128.0, 256.0, 512.0],
            aspect_ratios: vec![1.0, 2.0, 0.5],
            nms_threshold: 0.7,
            top_proposals_train: 2000,
            top_proposals_infer: 300,
            delta_weights: DeltaWeights::default(),
            smooth_l1_beta: 1.0,
            score_threshold: 0.5,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.nms_threshold > 0.0 && self.nms_threshold <= 1.0) {
            return Err(format!("nms_threshold {} outside (0, 1]", self.nms_threshold));
        }
        if self.top_proposals_train == 0 || self.top_proposals_infer == 0 {
            return Err("proposal counts must be positive".into());
        }
        let w = self.delta_weights;
        if [w.x, w.y, w.w, w.h].iter().any(|v| !(*v > 0.0)) {
            return Err("delta weights must be positive".into());
        }
        if !(self.smooth_l1_beta > 0.0) {
            return Err("smooth_l1_beta must be positive".into());
        }
        if self.anchor_sizes.iter().chain(&self.aspect_ratios).any(|v| !(*v > 0.0)) {
            return Err("anchor sizes and ratios must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err("score_threshold outside [0, 1]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = DetectionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.nms_threshold, 0.7);
        assert_eq!((cfg.top_proposals_train, cfg.top_proposals_infer), (2000, 300));
        assert_eq!(cfg.delta_weights, DeltaWeights { x: 0.1, y: 0.1, w: 0.2, h: 0.2 });
        assert_eq!(cfg.smooth_l1_beta, 1.0);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = DetectionConfig { nms_threshold: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.nms_threshold = 1.0;
        cfg.validate().unwrap();
        cfg.smooth_l1_beta = 0.0;
        assert!(cfg.validate().is_err());
    }
}
