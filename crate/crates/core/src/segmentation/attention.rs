use rand::Rng;

use super::tensor::{conv_params, Conv2d, FeatureMap};
use super::SegmentationError;

/// Additive attention gate: `psi(relu(W_g g + W_x x))` through a sigmoid.
///
/// The gating signal must already be resampled to the skip resolution; the
/// networks here take it after the decoder's upsampling step.
#[derive(Debug, Clone)]
pub struct AttentionGate {
    w_g: Conv2d,
    w_x: Conv2d,
    psi: Conv2d,
}

/// Intermediate width used by the gate for `f` input channels.
pub fn gate_inter_channels(f: usize) -> usize {
    (f / 2).max(1)
}

pub fn gate_params(f_g: usize, f_x: usize, f_int: usize) -> usize {
    conv_params(f_g, f_int, 1) + conv_params(f_x, f_int, 1) + conv_params(f_int, 1, 1)
}

impl AttentionGate {
    pub fn init<R: Rng>(rng: &mut R, f_g: usize, f_x: usize) -> Self {
        let f_int = gate_inter_channels(f_x);
        Self {
            w_g: Conv2d::init(rng, f_g, f_int, 1),
            w_x: Conv2d::init(rng, f_x, f_int, 1),
            psi: Conv2d::init(rng, f_int, 1, 1),
        }
    }

    /// All weights and biases zero, so every pre-activation is zero.
    pub fn zeros(f_g: usize, f_x: usize) -> Self {
        let f_int = gate_inter_channels(f_x);
        Self {
            w_g: Conv2d::zeros(f_g, f_int, 1),
            w_x: Conv2d::zeros(f_x, f_int, 1),
            psi: Conv2d::zeros(f_int, 1, 1),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w_g.parameter_count() + self.w_x.parameter_count() + self.psi.parameter_count()
    }

    /// One-channel coefficient grid in `[0, 1]`. With `hard = Some(t)` each
    /// coefficient becomes 1 when `>= t` and 0 otherwise.
    pub fn coefficients(
        &self,
        gating: &FeatureMap,
        skip: &FeatureMap,
        hard: Option<f32>,
    ) -> Result<FeatureMap, SegmentationError> {
        if gating.spatial() != skip.spatial() {
            return Err(SegmentationError::ShapeMismatch {
                expected: skip.spatial(),
                found: gating.spatial(),
            });
        }
        let pre = self.w_g.forward(gating)?.add(&self.w_x.forward(skip)?)?.relu();
        let coeff = self.psi.forward(&pre)?.sigmoid();
        Ok(match hard {
            Some(t) => harden(coeff, t),
            None => coeff,
        })
    }

    /// Skip features scaled by their coefficients.
    pub fn gate(
        &self,
        gating: &FeatureMap,
        skip: &FeatureMap,
        hard: Option<f32>,
    ) -> Result<FeatureMap, SegmentationError> {
        skip.scale_by(&self.coefficients(gating, skip, hard)?)
    }
}

/// Thresholds a coefficient grid to `{0, 1}` with `>=`.
pub fn harden(coeff: FeatureMap, threshold: f32) -> FeatureMap {
    let (c, h, w) = (coeff.channels(), coeff.height(), coeff.width());
    let data = coeff
        .data()
        .iter()
        .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
        .collect();
    FeatureMap::from_vec(c, h, w, data).expect("same shape")
}
