//! Geometric preparation: letterbox resizing, keypoint-driven rotation
//! correction and multi-resolution fan-out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("target side must be at least 1")]
    ZeroSide,
    #[error("clavicle keypoints coincide")]
    DegenerateKeypoints,
    #[error("keypoint set invalid: {0}")]
    InvalidKeypoints(&'static str),
    #[error("rotation angle {0} is outside (-90, 90)")]
    AngleOutOfRange(f64),
}

/// Maximum deviation between spine axis and clavicle-line normal before an
/// estimate is flagged as low confidence.
pub const SPINE_CONSISTENCY_DEGREES: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub left_clavicle: Point,
    pub right_clavicle: Point,
    /// Ordered top to bottom along the spine.
    pub spinous_process: Vec<Point>,
}

impl KeypointSet {
    pub fn new(
        left_clavicle: Point,
        right_clavicle: Point,
        spinous_process: Vec<Point>,
    ) -> Result<Self, PreprocessError> {
        let kp = Self {
            left_clavicle,
            right_clavicle,
            spinous_process,
        };
        kp.validate()?;
        Ok(kp)
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.spinous_process.len() < 2 {
            return Err(PreprocessError::InvalidKeypoints(
                "need at least two spinous process points",
            ));
        }
        let all_finite = self
            .points()
            .all(|p| p.x.is_finite() && p.y.is_finite());
        if !all_finite {
            return Err(PreprocessError::InvalidKeypoints("non-finite coordinate"));
        }
        if self.left_clavicle == self.right_clavicle {
            return Err(PreprocessError::DegenerateKeypoints);
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        [&self.left_clavicle, &self.right_clavicle]
            .into_iter()
            .chain(self.spinous_process.iter())
    }

    pub fn within_bounds(&self, width: usize, height: usize) -> bool {
        let (w, h) = ((width - 1) as f64, (height - 1) as f64);
        self.points()
            .all(|p| (0.0..=w).contains(&p.x) && (0.0..=h).contains(&p.y))
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        Self {
            left_clavicle: f(self.left_clavicle),
            right_clavicle: f(self.right_clavicle),
            spinous_process: self.spinous_process.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Mirror about the vertical axis of an image of the given width.
    pub fn flip_horizontal(&self, width: usize) -> Self {
        let w = (width - 1) as f64;
        self.map(|p| Point::new(w - p.x, p.y))
    }
}

/// The three square classifier input sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionSet(pub [usize; 3]);

impl Default for ResolutionSet {
    fn default() -> Self {
        Self([224, 320, 512])
    }
}

impl ResolutionSet {
    pub fn contains(&self, side: usize) -> bool {
        self.0.contains(&side)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

/// Bilinear sample at pixel-centre coordinates, clamping at the edges.
fn sample_clamped(img: &Image8, sx: f64, sy: f64) -> f64 {
    let max_x = (img.width() - 1) as f64;
    let max_y = (img.height() - 1) as f64;
    let sx = sx.clamp(0.0, max_x);
    let sy = sy.clamp(0.0, max_y);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let top = f64::from(img.get(x0, y0)) * (1.0 - fx) + f64::from(img.get(x1, y0)) * fx;
    let bottom = f64::from(img.get(x0, y1)) * (1.0 - fx) + f64::from(img.get(x1, y1)) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Anisotropic bilinear resize to exactly `width` x `height`.
pub fn resize_exact(img: &Image8, width: usize, height: usize) -> Result<Image8, PreprocessError> {
    if width == 0 || height == 0 {
        return Err(PreprocessError::ZeroSide);
    }
    if (width, height) == (img.width(), img.height()) {
        return Ok(img.clone());
    }
    let kx = img.width() as f64 / width as f64;
    let ky = img.height() as f64 / height as f64;
    Image8::from_fn(width, height, |x, y| {
        let sx = (x as f64 + 0.5) * kx - 0.5;
        let sy = (y as f64 + 0.5) * ky - 0.5;
        to_u8(sample_clamped(img, sx, sy))
    })
    .map_err(|_| PreprocessError::EmptyImage)
}

/// Bilinear resize into a `side` x `side` square, preserving aspect ratio
/// with centred zero-valued letterbox bands.
pub fn resize(img: &Image8, side: usize) -> Result<Image8, PreprocessError> {
    if side == 0 {
        return Err(PreprocessError::ZeroSide);
    }
    let (w, h) = (img.width(), img.height());
    if (w, h) == (side, side) {
        return Ok(img.clone());
    }
    let scale = side as f64 / w.max(h) as f64;
    let cw = ((w as f64 * scale).round() as usize).clamp(1, side);
    let ch = ((h as f64 * scale).round() as usize).clamp(1, side);
    let content = resize_exact(img, cw, ch)?;
    let ox = (side - cw) / 2;
    let oy = (side - ch) / 2;
    let mut pixels = vec![0u8; side * side];
    for y in 0..ch {
        let src = &content.pixels()[y * cw..(y + 1) * cw];
        let start = (y + oy) * side + ox;
        pixels[start..start + cw].copy_from_slice(src);
    }
    Image8::new(side, side, pixels).map_err(|_| PreprocessError::EmptyImage)
}

pub fn multi_resolution(img: &Image8, rs: &ResolutionSet) -> Result<Vec<Image8>, PreprocessError> {
    rs.iter().map(|side| resize(img, side)).collect()
}

/// Signed tilt of the inter-clavicular line against the image horizontal,
/// in `(-90, 90]` degrees. Positive means a clockwise tilt in image
/// coordinates (y grows downward); correction applies the negated angle.
pub fn estimate_rotation(kp: &KeypointSet) -> Result<f64, PreprocessError> {
    let mut dx = kp.right_clavicle.x - kp.left_clavicle.x;
    let mut dy = kp.right_clavicle.y - kp.left_clavicle.y;
    if dx.hypot(dy) < 1e-9 {
        return Err(PreprocessError::DegenerateKeypoints);
    }
    if dx < 0.0 || (dx == 0.0 && dy < 0.0) {
        dx = -dx;
        dy = -dy;
    }
    let angle = dy.atan2(dx).to_degrees();
    Ok(if angle <= -90.0 { angle + 180.0 } else { angle })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    pub angle_degrees: f64,
    /// Unsigned angle between the spine axis and the clavicle-line normal.
    pub spine_deviation_degrees: f64,
    pub low_confidence: bool,
}

/// Clavicle-line angle plus the spine consistency check.
pub fn rotation_estimate(kp: &KeypointSet) -> Result<RotationEstimate, PreprocessError> {
    let angle = estimate_rotation(kp)?;
    let deviation = spine_axis(&kp.spinous_process).map(|(sx, sy)| {
        let nx = -(kp.right_clavicle.y - kp.left_clavicle.y);
        let ny = kp.right_clavicle.x - kp.left_clavicle.x;
        let cos = ((sx * nx + sy * ny) / (nx.hypot(ny) * sx.hypot(sy))).abs();
        cos.clamp(0.0, 1.0).acos().to_degrees()
    });
    let spine_deviation_degrees = deviation.unwrap_or(90.0);
    Ok(RotationEstimate {
        angle_degrees: angle,
        spine_deviation_degrees,
        low_confidence: spine_deviation_degrees >= SPINE_CONSISTENCY_DEGREES,
    })
}

/// Principal axis (total least squares) of the spine points.
fn spine_axis(points: &[Point]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy < 1e-12 {
        return None;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((theta.cos(), theta.sin()))
}

/// Rotation about the image centre that corrects a tilt of `angle` degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationTransform {
    cos: f64,
    sin: f64,
    cx: f64,
    cy: f64,
}

impl RotationTransform {
    pub fn new(angle_degrees: f64, width: usize, height: usize) -> Self {
        let phi = (-angle_degrees).to_radians();
        Self {
            cos: phi.cos(),
            sin: phi.sin(),
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    /// Where a source point lands in the rotated output.
    pub fn forward(&self, p: Point) -> Point {
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        Point::new(
            self.cx + self.cos * dx - self.sin * dy,
            self.cy + self.sin * dx + self.cos * dy,
        )
    }

    /// Which source point an output pixel samples.
    pub fn inverse(&self, p: Point) -> Point {
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        Point::new(
            self.cx + self.cos * dx + self.sin * dy,
            self.cy - self.sin * dx + self.cos * dy,
        )
    }
}

/// Rotates about the image centre by `-angle_degrees` with bilinear
/// resampling. Samples falling outside the source are filled with 0.
pub fn apply_rotation(img: &Image8, angle_degrees: f64) -> Result<Image8, PreprocessError> {
    if !angle_degrees.is_finite() || angle_degrees.abs() >= 90.0 {
        return Err(PreprocessError::AngleOutOfRange(angle_degrees));
    }
    if angle_degrees == 0.0 {
        return Ok(img.clone());
    }
    let t = RotationTransform::new(angle_degrees, img.width(), img.height());
    let max_x = (img.width() - 1) as f64;
    let max_y = (img.height() - 1) as f64;
    const EPS: f64 = 1e-9;
    Image8::from_fn(img.width(), img.height(), |x, y| {
        let src = t.inverse(Point::new(x as f64, y as f64));
        if src.x < -EPS || src.y < -EPS || src.x > max_x + EPS || src.y > max_y + EPS {
            0
        } else {
            to_u8(sample_clamped(img, src.x, src.y))
        }
    })
    .map_err(|_| PreprocessError::EmptyImage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kp(l: (f64, f64), r: (f64, f64)) -> KeypointSet {
        KeypointSet::new(
            Point::new(l.0, l.1),
            Point::new(r.0, r.1),
            vec![Point::new(125.0, 120.0), Point::new(125.0, 300.0)],
        )
        .unwrap()
    }

    #[test]
    fn constant_resize_stays_constant() {
        let img = Image8::filled(512, 512, 128).unwrap();
        let out = resize(&img, 224).unwrap();
        assert_eq!((out.width(), out.height()), (224, 224));
        assert!(out.pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn checkerboard_upsample() {
        let img = Image8::new(2, 2, vec![0, 255, 255, 0]).unwrap();
        let out = resize(&img, 4).unwrap();
        // Corners sample exactly at source pixel centres after clamping.
        assert_eq!(out.get(0, 0), 0);
        assert_eq!(out.get(3, 0), 255);
        assert_eq!(out.get(0, 3), 255);
        assert_eq!(out.get(3, 3), 0);
        // Interior pixel (1,1) samples (0.25,0.25):
        // 0*.75*.75 + 255*.25*.75*2 + 0*.25*.25 = 95.625 -> 96
        assert_eq!(out.get(1, 1), 96);
        assert_eq!(out.get(2, 1), 159);
    }

    #[test]
    fn letterbox_bands() {
        let img = Image8::filled(100, 200, 200).unwrap();
        let out = resize(&img, 224).unwrap();
        // 224 * (1 - 100/200) / 2 = 56
        for y in 0..224 {
            for x in 0..224 {
                let inside = (56..168).contains(&x);
                assert_eq!(out.get(x, y) == 200, inside, "({x},{y})");
            }
        }
    }

    #[test]
    fn resize_same_side_is_identity() {
        let img = Image8::from_fn(32, 32, |x, y| (x * 7 + y * 3) as u8).unwrap();
        assert_eq!(resize(&img, 32).unwrap(), img);
        assert_eq!(resize(&img, 0), Err(PreprocessError::ZeroSide));
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(estimate_rotation(&kp((50.0, 100.0), (200.0, 100.0))).unwrap(), 0.0);
        let a = estimate_rotation(&kp((50.0, 100.0), (200.0, 113.12))).unwrap();
        let oracle = 13.12f64.atan2(150.0).to_degrees();
        assert!((a - oracle).abs() < 1e-12);
        assert!((a - 5.0).abs() < 0.01);
        let degenerate = KeypointSet {
            left_clavicle: Point::new(3.0, 3.0),
            right_clavicle: Point::new(3.0, 3.0),
            spinous_process: vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0)],
        };
        assert_eq!(estimate_rotation(&degenerate), Err(PreprocessError::DegenerateKeypoints));
    }

    #[test]
    fn vertical_clavicle_line_is_plus_ninety() {
        assert_eq!(estimate_rotation(&kp((10.0, 10.0), (10.0, 50.0))).unwrap(), 90.0);
        assert_eq!(estimate_rotation(&kp((10.0, 50.0), (10.0, 10.0))).unwrap(), 90.0);
    }

    #[test]
    fn spine_consistency_flag() {
        let good = rotation_estimate(&kp((50.0, 100.0), (200.0, 100.0))).unwrap();
        assert!(!good.low_confidence);
        assert!(good.spine_deviation_degrees < 1e-9);
        let skewed = KeypointSet::new(
            Point::new(50.0, 100.0),
            Point::new(200.0, 100.0),
            vec![Point::new(100.0, 100.0), Point::new(160.0, 200.0)],
        )
        .unwrap();
        assert!(rotation_estimate(&skewed).unwrap().low_confidence);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = Image8::from_fn(17, 9, |x, y| (x * 13 + y * 29) as u8).unwrap();
        assert_eq!(apply_rotation(&img, 0.0).unwrap(), img);
        assert!(apply_rotation(&img, 90.0).is_err());
    }

    fn psnr_in_disc(a: &Image8, b: &Image8, radius: f64) -> f64 {
        let (cx, cy) = ((a.width() - 1) as f64 / 2.0, (a.height() - 1) as f64 / 2.0);
        let mut se = 0.0;
        let mut n = 0.0;
        for y in 0..a.height() {
            for x in 0..a.width() {
                if (x as f64 - cx).hypot(y as f64 - cy) <= radius {
                    let d = f64::from(a.get(x, y)) - f64::from(b.get(x, y));
                    se += d * d;
                    n += 1.0;
                }
            }
        }
        10.0 * (255.0f64 * 255.0 / (se / n)).log10()
    }

    #[test]
    fn rotate_and_back_roundtrip_psnr() {
        // Smooth gradient; PSNR measured where both passes stay in frame.
        let img = Image8::from_fn(128, 128, |x, y| ((x + y) as f64 * 255.0 / 254.0).round() as u8)
            .unwrap();
        let there = apply_rotation(&img, 5.0).unwrap();
        let back = apply_rotation(&there, -5.0).unwrap();
        let psnr = psnr_in_disc(&img, &back, 60.0);
        assert!(psnr >= 30.0, "psnr {psnr}");
    }

    #[test]
    fn rotation_moves_keypoints_consistently() {
        let k = kp((50.0, 100.0), (200.0, 100.0));
        let t = RotationTransform::new(5.0, 256, 256);
        let moved = k.map(|p| t.forward(p));
        let a = estimate_rotation(&moved).unwrap();
        assert!((a + 5.0).abs() < 0.5, "{a}");
        let back = moved.map(|p| t.inverse(p));
        assert!((back.right_clavicle.x - 200.0).abs() < 1e-9);
    }

    #[test]
    fn constant_frame_loss_bounded_by_corner_area() {
        let img = Image8::filled(64, 48, 200).unwrap();
        for angle in [3.0, -7.5, 20.0] {
            let out = apply_rotation(&img, angle).unwrap();
            let outside = out.pixels().iter().filter(|&&p| p == 0).count() as f64;
            let frac = outside / out.pixels().len() as f64;
            assert!((img.mean() - out.mean()).abs() <= frac * 255.0 + 1e-9);
            assert!(out.pixels().iter().all(|&p| p == 0 || p == 200));
        }
    }

    #[test]
    fn multi_resolution_sizes() {
        let img = Image8::filled(300, 200, 9).unwrap();
        let outs = multi_resolution(&img, &ResolutionSet::default()).unwrap();
        let sides: Vec<_> = outs.iter().map(|i| (i.width(), i.height())).collect();
        assert_eq!(sides, vec![(224, 224), (320, 320), (512, 512)]);
        assert_eq!(outs, multi_resolution(&img, &ResolutionSet::default()).unwrap());
    }

    prop_compose! {
        fn arb_kp()(lx in 0.0..500.0f64, ly in 0.0..500.0f64,
                    dx in 1.0..300.0f64, dy in -200.0..200.0f64) -> KeypointSet {
            kp((lx, ly), (lx + dx, ly + dy))
        }
    }

    proptest! {
        #[test]
        fn rotation_translation_and_scale_invariant(k in arb_kp(), tx in -100.0..100.0f64,
                                                    ty in -100.0..100.0f64, s in 0.1..10.0f64) {
            let a = estimate_rotation(&k).unwrap();
            let moved = k.map(|p| Point::new(p.x * s + tx, p.y * s + ty));
            prop_assert!((estimate_rotation(&moved).unwrap() - a).abs() < 1e-9);
        }

        #[test]
        fn flip_negates_rotation(k in arb_kp()) {
            let a = estimate_rotation(&k).unwrap();
            let flipped = estimate_rotation(&k.flip_horizontal(1024)).unwrap();
            prop_assert!((flipped + a).abs() < 1e-9);
        }

        #[test]
        fn rotation_preserves_dimensions(w in 1usize..40, h in 1usize..40, angle in -89.0..89.0f64) {
            let img = Image8::filled(w, h, 77).unwrap();
            let out = apply_rotation(&img, angle).unwrap();
            prop_assert_eq!((out.width(), out.height()), (w, h));
        }
    }
}
