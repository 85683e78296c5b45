use serde::{Deserialize, Serialize};

use super::SegmentationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegVariant {
    AttentionUNet,
    UNetPlusPlus,
    DenseUNet,
}

impl SegVariant {
    pub const ALL: [SegVariant; 3] = [
        SegVariant::AttentionUNet,
        SegVariant::UNetPlusPlus,
        SegVariant::DenseUNet,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub variant: SegVariant,
    /// Resolution levels. For the dense variant this equals `dense_blocks`.
    pub depth: usize,
    pub base_filters: usize,
    pub growth_rate_k: usize,
    pub dense_blocks: usize,
    pub layers_per_block: usize,
    pub dropout: f64,
    pub gate_threshold: f64,
    /// Binarise gate coefficients at `gate_threshold` instead of using them soft.
    pub hard_gate: bool,
    pub mask_threshold: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_every_epochs: usize,
}

impl SegmentationConfig {
    /// Full-size configuration. Audited structurally; too large to execute here.
    pub fn paper_scale(variant: SegVariant) -> Self {
        let dense = variant == SegVariant::DenseUNet;
        Self {
            variant,
            depth: if dense { 4 } else { 5 },
            base_filters: if dense { 32 } else { 64 },
            growth_rate_k: 12,
            dense_blocks: 4,
            layers_per_block: 4,
            dropout: 0.3,
            gate_threshold: 0.5,
            hard_gate: false,
            mask_threshold: 0.5,
            batch_size: 8,
            learning_rate: 0.0005,
            lr_decay: 0.9,
            lr_decay_every_epochs: 15,
        }
    }

    /// Depth 3, base 8: small enough to run per detection crop.
    pub fn toy(variant: SegVariant) -> Self {
        Self {
            depth: 3,
            base_filters: 8,
            growth_rate_k: 4,
            dense_blocks: 3,
            layers_per_block: 2,
            ..Self::paper_scale(variant)
        }
    }

    pub fn validate(&self) -> Result<(), SegmentationError> {
        let bad = |m: &str| Err(SegmentationError::InvalidConfig(m.to_string()));
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.gate_threshold) || !open_unit(self.mask_threshold) {
            return bad("thresholds must lie in (0, 1)");
        }
        if self.base_filters == 0 || self.growth_rate_k == 0 {
            return bad("filters and growth rate must be positive");
        }
        match self.variant {
            SegVariant::DenseUNet => {
                if self.dense_blocks < 2 || self.depth != self.dense_blocks {
                    return bad("dense variant needs depth == dense_blocks >= 2");
                }
            }
            _ => {
                if self.depth < 2 {
                    return bad("depth must be at least 2");
                }
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    /// Side lengths must be a multiple of this; inputs are padded up to it.
    pub fn side_multiple(&self) -> usize {
        1 << (self.depth - 1)
    }

    /// Learning rate after `epoch` whole epochs under step decay.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let steps = epoch / self.lr_decay_every_epochs.max(1);
        self.learning_rate * self.lr_decay.powi(steps as i32)
    }
}

/// `c_in + layers * k`: channels leaving a dense block.
pub fn dense_block_channels(c_in: usize, layers_per_block: usize, k: usize) -> usize {
    c_in + layers_per_block * k
}

/// Channel count per resolution level.
pub fn filter_schedule(cfg: &SegmentationConfig) -> Vec<usize> {
    match cfg.variant {
        SegVariant::DenseUNet => {
            let mut c = cfg.base_filters;
            (0..cfg.dense_blocks)
                .map(|_| {
                    c = dense_block_channels(c, cfg.layers_per_block, cfg.growth_rate_k);
                    c
                })
                .collect()
        }
        _ => (0..cfg.depth).map(|l| cfg.base_filters << l).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_schedule() {
        let cfg = SegmentationConfig::paper_scale(SegVariant::AttentionUNet);
        assert_eq!(filter_schedule(&cfg), vec![64, 128, 256, 512, 1024]);
        let pp = SegmentationConfig::paper_scale(SegVariant::UNetPlusPlus);
        assert_eq!(filter_schedule(&pp), vec![64, 128, 256, 512, 1024]);
        let one = SegmentationConfig { depth: 1, ..cfg };
        assert_eq!(filter_schedule(&one), vec![64]);
    }

    #[test]
    fn dense_growth() {
        assert_eq!(dense_block_channels(32, 4, 12), 80);
        assert_eq!(dense_block_channels(32, 0, 12), 32);
        let cfg = SegmentationConfig::paper_scale(SegVariant::DenseUNet);
        assert_eq!(filter_schedule(&cfg), vec![80, 128, 176, 224]);
        let mut c = 32;
        for _ in 0..4 {
            c = dense_block_channels(c, 4, 12);
        }
        assert_eq!(c, 32 + 4 * 48);
    }

    #[test]
    fn constants_and_validation() {
        for v in SegVariant::ALL {
            let cfg = SegmentationConfig::paper_scale(v);
            cfg.validate().unwrap();
            SegmentationConfig::toy(v).validate().unwrap();
            assert_eq!((cfg.dropout, cfg.batch_size), (0.3, 8));
            assert_eq!((cfg.gate_threshold, cfg.mask_threshold), (0.5, 0.5));
        }
        let cfg = SegmentationConfig::paper_scale(SegVariant::AttentionUNet);
        assert!((cfg.learning_rate_at(14) - 0.0005).abs() < 1e-15);
        assert!((cfg.learning_rate_at(15) - 0.00045).abs() < 1e-15);
        assert!((cfg.learning_rate_at(30) - 0.0005 * 0.81).abs() < 1e-15);
        let bad = SegmentationConfig { mask_threshold: 1.0, ..cfg.clone() };
        assert!(bad.validate().is_err());
        let shallow = SegmentationConfig { depth: 1, ..cfg };
        assert!(shallow.validate().is_err());
    }
}
