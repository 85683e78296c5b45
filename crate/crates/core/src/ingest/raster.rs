use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Photometric {
    /// Lowest value displays as white.
    Monochrome1,
    /// Lowest value displays as black.
    Monochrome2,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RasterError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("value {value} does not fit in {bits} stored bits")]
    ValueOutOfRange { value: u16, bits: u8 },
    #[error("{0} bits stored is outside 8..=16")]
    UnsupportedBitDepth(u8),
}

/// Decoded DICOM raster before display windowing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    bits_stored: u8,
    photometric: Photometric,
    pixels: Vec<u16>,
}

impl RawImage {
    pub fn new(
        width: usize,
        height: usize,
        bits_stored: u8,
        photometric: Photometric,
        pixels: Vec<u16>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(RasterError::BufferSize {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if bits_stored == 0 || bits_stored > 16 {
            return Err(RasterError::UnsupportedBitDepth(bits_stored));
        }
        let limit = 1u32 << bits_stored;
        if let Some(&value) = pixels.iter().find(|&&p| u32::from(p) >= limit) {
            return Err(RasterError::ValueOutOfRange {
                value,
                bits: bits_stored,
            });
        }
        Ok(Self {
            width,
            height,
            bits_stored,
            photometric,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits_stored(&self) -> u8 {
        self.bits_stored
    }

    pub fn photometric(&self) -> Photometric {
        self.photometric
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }
}

/// Min-max windows the raster onto `[0, 255]`, inverting MONOCHROME1 so that
/// higher output is always brighter. A constant image maps to all zeros.
pub fn to_eight_bit(img: &RawImage) -> Result<Image8, RasterError> {
    if !(8..=16).contains(&img.bits_stored) {
        return Err(RasterError::UnsupportedBitDepth(img.bits_stored));
    }
    let (min, max) = img
        .pixels
        .iter()
        .fold((u16::MAX, u16::MIN), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    if img.pixels.is_empty() {
        return Err(RasterError::EmptyImage);
    }
    let pixels = if min == max {
        vec![0u8; img.pixels.len()]
    } else {
        let range = f64::from(max - min);
        img.pixels
            .iter()
            .map(|&p| {
                let v = (f64::from(p - min) * 255.0 / range).round() as u8;
                match img.photometric {
                    Photometric::Monochrome1 => 255 - v,
                    Photometric::Monochrome2 => v,
                }
            })
            .collect()
    };
    Image8::new(img.width, img.height, pixels).map_err(|_| RasterError::EmptyImage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(bits: u8, photometric: Photometric, pixels: Vec<u16>) -> RawImage {
        RawImage::new(pixels.len(), 1, bits, photometric, pixels).unwrap()
    }

    #[test]
    fn twelve_bit_extremes() {
        let out = to_eight_bit(&raw(12, Photometric::Monochrome2, vec![0, 4095])).unwrap();
        assert_eq!(out.pixels(), &[0, 255]);
    }

    #[test]
    fn monochrome1_inverts() {
        let out = to_eight_bit(&raw(12, Photometric::Monochrome1, vec![0, 4095])).unwrap();
        assert_eq!(out.pixels(), &[255, 0]);
    }

    #[test]
    fn constant_maps_to_zero() {
        for photometric in [Photometric::Monochrome1, Photometric::Monochrome2] {
            let out = to_eight_bit(&raw(16, photometric, vec![900; 6])).unwrap();
            assert!(out.pixels().iter().all(|&p| p == 0));
        }
    }

    #[test]
    fn midpoint_rounds() {
        // (2048 - 0) * 255 / 4095 = 127.53 -> 128
        let out = to_eight_bit(&raw(12, Photometric::Monochrome2, vec![0, 2048, 4095])).unwrap();
        assert_eq!(out.pixels(), &[0, 128, 255]);
    }

    #[test]
    fn rejects_bad_rasters() {
        assert_eq!(
            RawImage::new(1, 1, 8, Photometric::Monochrome2, vec![256]),
            Err(RasterError::ValueOutOfRange { value: 256, bits: 8 })
        );
        assert_eq!(
            RawImage::new(0, 1, 8, Photometric::Monochrome2, vec![]),
            Err(RasterError::EmptyImage)
        );
        let low = raw(6, Photometric::Monochrome2, vec![1, 2]);
        assert_eq!(to_eight_bit(&low), Err(RasterError::UnsupportedBitDepth(6)));
    }

    proptest! {
        #[test]
        fn monochrome2_is_monotone(pixels in prop::collection::vec(0u16..4096, 2..64)) {
            let img = raw(12, Photometric::Monochrome2, pixels.clone());
            let out = to_eight_bit(&img).unwrap();
            for i in 0..pixels.len() {
                for j in 0..pixels.len() {
                    if pixels[i] <= pixels[j] {
                        prop_assert!(out.pixels()[i] <= out.pixels()[j]);
                    }
                }
            }
        }
    }
}
