//! U-Net family segmentation: configuration calculus, attention gates,
//! seeded toy forward passes and mask post-processing.

mod attention;
mod config;
mod mask;
mod network;
mod tensor;

pub use attention::{gate_inter_channels, gate_params, harden, AttentionGate};
pub use config::{dense_block_channels, filter_schedule, SegVariant, SegmentationConfig};
pub use mask::{binarize_mask, BinaryMask, Mask, MaskError, Rle, MAX_MASK_PIXELS};
pub use network::{
    dense_layer_params, nested_inputs, parameter_count, SegNet, MAX_EXECUTABLE_PARAMS,
};
pub use tensor::{conv_params, sigmoid, softmax_channels, Conv2d, FeatureMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{BBox, Detection};
use crate::image::Image8;
use crate::preprocess::resize_exact;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentationError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("segmentation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid segmentation config: {0}")]
    InvalidConfig(String),
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub seed: u64,
    /// Side of the square each crop is resampled to before segmentation.
    pub crop_side: usize,
    /// Fraction of box width/height added on every side before cropping.
    pub crop_margin: f64,
    pub mask_threshold: f64,
    pub hard_gate: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            crop_side: 32,
            crop_margin: 0.1,
            mask_threshold: 0.5,
            hard_gate: false,
        }
    }
}

/// Segmented region: the crop rectangle in image pixels plus the binary mask
/// at crop resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub crop: BBox,
    pub mask: BinaryMask,
    pub probabilities: Mask,
}

/// Averages the three toy U-Net variants over each detection crop.
#[derive(Debug, Clone)]
pub struct SegmentationEnsemble {
    cfg: EnsembleConfig,
    nets: Vec<SegNet>,
}

impl SegmentationEnsemble {
    pub fn new(cfg: EnsembleConfig) -> Result<Self, SegmentationError> {
        if cfg.crop_side == 0 || !(cfg.crop_margin >= 0.0) {
            return Err(SegmentationError::InvalidConfig(
                "crop_side must be positive and crop_margin non-negative".into(),
            ));
        }
        let nets = SegVariant::ALL
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let net_cfg = SegmentationConfig {
                    hard_gate: cfg.hard_gate,
                    mask_threshold: cfg.mask_threshold,
                    ..SegmentationConfig::toy(v)
                };
                SegNet::build(&net_cfg, cfg.seed.wrapping_add(i as u64))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { cfg, nets })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.cfg
    }

    pub fn segment(&self, img: &Image8, det: &Detection) -> Result<RegionMask, SegmentationError> {
        let crop_box = det
            .bbox
            .expand(self.cfg.crop_margin)
            .clip(img.width() as f64, img.height() as f64)
            .map_err(|_| SegmentationError::EmptyInput)?;
        let x0 = crop_box.x1().floor() as usize;
        let y0 = crop_box.y1().floor() as usize;
        let x1 = (crop_box.x2().ceil() as usize).min(img.width());
        let y1 = (crop_box.y2().ceil() as usize).min(img.height());
        let patch = img
            .crop(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
            .map_err(|_| SegmentationError::EmptyInput)?;
        let side = self.cfg.crop_side;
        let patch = resize_exact(&patch, side, side).map_err(|_| SegmentationError::EmptyInput)?;
        let mut acc = vec![0.0f32; side * side];
        for net in &self.nets {
            for (a, p) in acc.iter_mut().zip(net.forward(&patch)?) {
                *a += p;
            }
        }
        let n = self.nets.len() as f32;
        let probs: Vec<f32> = acc.into_iter().map(|v| (v / n).clamp(0.0, 1.0)).collect();
        let probabilities = Mask::new(side, side, probs, det.label)?;
        let mask = binarize_mask(&probabilities, self.cfg.mask_threshold as f32);
        let crop = BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64)
            .map_err(|_| SegmentationError::EmptyInput)?;
        Ok(RegionMask {
            crop,
            mask,
            probabilities,
        })
    }
}
