use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::PathologyLabel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("expected {expected} values, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f32),
    #[error("run lengths sum to {found}, expected {expected}")]
    RunLengthTotal { expected: u64, found: u64 },
    #[error("mask of {width}x{height} exceeds the decode limit")]
    TooLarge { width: usize, height: usize },
}

/// Largest mask, in pixels, that [`Rle::decode`] will materialise.
pub const MAX_MASK_PIXELS: u64 = 1 << 26;

/// Per-pixel foreground probabilities for one labelled region.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    probs: Vec<f32>,
    label: PathologyLabel,
}

impl Mask {
    pub fn new(
        width: usize,
        height: usize,
        probs: Vec<f32>,
        label: PathologyLabel,
    ) -> Result<Self, MaskError> {
        if probs.len() != width * height {
            return Err(MaskError::SizeMismatch {
                expected: width * height,
                found: probs.len(),
            });
        }
        if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(MaskError::OutOfRange(p));
        }
        Ok(Self {
            width,
            height,
            probs,
            label,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn probs(&self) -> &[f32] {
        &self.probs
    }
    pub fn label(&self) -> PathologyLabel {
        self.label
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

/// Pixel is set iff its probability is `>= threshold`.
pub fn binarize_mask(m: &Mask, threshold: f32) -> BinaryMask {
    BinaryMask {
        width: m.width,
        height: m.height,
        bits: m.probs.iter().map(|&p| p >= threshold).collect(),
    }
}

/// Row-major run lengths alternating zero/one, always starting with a
/// (possibly empty) run of zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<u32>,
}

impl BinaryMask {
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn to_rle(&self) -> Rle {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in &self.bits {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        Rle {
            width: self.width,
            height: self.height,
            runs,
        }
    }
}

impl Rle {
    pub fn decode(&self) -> Result<BinaryMask, MaskError> {
        let expected = (self.width as u64)
            .checked_mul(self.height as u64)
            .filter(|&n| n <= MAX_MASK_PIXELS)
            .ok_or(MaskError::TooLarge {
                width: self.width,
                height: self.height,
            })?;
        let found: u64 = self.runs.iter().map(|&r| u64::from(r)).sum();
        if found != expected {
            return Err(MaskError::RunLengthTotal { expected, found });
        }
        let mut bits = Vec::with_capacity(expected as usize);
        for (i, &r) in self.runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
        }
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label() -> PathologyLabel {
        PathologyLabel::from_index(0).unwrap()
    }

    #[test]
    fn binarize_examples() {
        let m = Mask::new(2, 2, vec![0.4; 4], label()).unwrap();
        assert_eq!(binarize_mask(&m, 0.5).count_ones(), 0);
        let m = Mask::new(2, 1, vec![0.5, 0.5], label()).unwrap();
        assert_eq!(binarize_mask(&m, 0.5).bits, vec![true, true]);
        let checker: Vec<f32> = (0..16).map(|i| if (i / 4 + i % 4) % 2 == 0 { 0.2 } else { 0.7 }).collect();
        let b = binarize_mask(&Mask::new(4, 4, checker.clone(), label()).unwrap(), 0.5);
        for (bit, p) in b.bits.iter().zip(&checker) {
            assert_eq!(*bit, *p == 0.7);
        }
    }

    #[test]
    fn rejects_bad_masks() {
        assert!(Mask::new(2, 2, vec![0.1; 3], label()).is_err());
        assert!(Mask::new(1, 1, vec![1.5], label()).is_err());
    }

    #[test]
    fn rle_examples() {
        let m = BinaryMask { width: 3, height: 2, bits: vec![true, true, false, false, false, true] };
        assert_eq!(m.to_rle().runs, vec![0, 2, 3, 1]);
        let z = BinaryMask { width: 2, height: 1, bits: vec![false, false] };
        assert_eq!(z.to_rle().runs, vec![2]);
        let bad = Rle { width: 2, height: 2, runs: vec![1, 1] };
        assert!(bad.decode().is_err());
    }

    proptest! {
        #[test]
        fn rle_roundtrip(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
            let m = BinaryMask { width: bits.len(), height: 1, bits };
            prop_assert_eq!(m.to_rle().decode().unwrap(), m);
        }

        #[test]
        fn binarize_monotone(probs in proptest::collection::vec(0.0f32..=1.0, 1..64),
                             idx in any::<prop::sample::Index>(), bump in 0.0f32..1.0) {
            let n = probs.len();
            let before = binarize_mask(&Mask::new(n, 1, probs.clone(), label()).unwrap(), 0.5);
            let mut raised = probs;
            let i = idx.index(n);
            raised[i] = (raised[i] + bump).min(1.0);
            let after = binarize_mask(&Mask::new(n, 1, raised, label()).unwrap(), 0.5);
            for (a, b) in before.bits.iter().zip(&after.bits) {
                prop_assert!(!*a || *b);
            }
        }
    }
}
