use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackendError, ModelBackend, View, ViewCall};
use crate::detection::{decode_deltas, generate_anchors, Deltas, Detection, DetectionConfig};
use crate::image::Image8;
use crate::labels::PathologyLabel;
use crate::preprocess::{KeypointSet, Point, ResolutionSet};

const EMBED_DIM: usize = 16;
const PATCH: usize = 32;
const PROPOSAL_STRIDE: f64 = 64.0;

fn uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec(m: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| m[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Patch embedding, one single-head self-attention block with a residual
/// connection, mean pooling and a two-class softmax head.
#[derive(Debug, Clone)]
pub struct TinyVit {
    side: usize,
    embed: Vec<f64>,
    pos: Vec<f64>,
    wq: Vec<f64>,
    wk: Vec<f64>,
    wv: Vec<f64>,
    head: Vec<f64>,
    bias: [f64; 2],
}

impl TinyVit {
    pub fn new(side: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (side as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let tokens = Self::grid(side).pow(2);
        let patch_len = PATCH * PATCH;
        Self {
            side,
            embed: uniform(&mut rng, EMBED_DIM * patch_len, patch_len),
            pos: uniform(&mut rng, tokens * EMBED_DIM, EMBED_DIM),
            wq: uniform(&mut rng, EMBED_DIM * EMBED_DIM, EMBED_DIM),
            wk: uniform(&mut rng, EMBED_DIM * EMBED_DIM, EMBED_DIM),
            wv: uniform(&mut rng, EMBED_DIM * EMBED_DIM, EMBED_DIM),
            head: uniform(&mut rng, 2 * EMBED_DIM, EMBED_DIM),
            bias: [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)],
        }
    }

    fn grid(side: usize) -> usize {
        side.div_ceil(PATCH)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn token_count(&self) -> usize {
        Self::grid(self.side).pow(2)
    }

    /// `[normal, abnormal]` for a `side x side` image.
    pub fn forward(&self, img: &Image8) -> Vec<f64> {
        let g = Self::grid(self.side);
        let mut tokens = Vec::with_capacity(g * g);
        let mut patch = vec![0.0; PATCH * PATCH];
        for ty in 0..g {
            for tx in 0..g {
                for py in 0..PATCH {
                    for px in 0..PATCH {
                        let (x, y) = (tx * PATCH + px, ty * PATCH + py);
                        patch[py * PATCH + px] = if x < img.width() && y < img.height() {
                            img.get(x, y) as f64 / 255.0 - 0.5
                        } else {
                            0.0
                        };
                    }
                }
                let mut t = matvec(&self.embed, EMBED_DIM, &patch);
                let i = tokens.len();
                for (v, p) in t.iter_mut().zip(&self.pos[i * EMBED_DIM..(i + 1) * EMBED_DIM]) {
                    *v += p;
                }
                tokens.push(t);
            }
        }
        let q: Vec<Vec<f64>> = tokens.iter().map(|t| matvec(&self.wq, EMBED_DIM, t)).collect();
        let k: Vec<Vec<f64>> = tokens.iter().map(|t| matvec(&self.wk, EMBED_DIM, t)).collect();
        let v: Vec<Vec<f64>> = tokens.iter().map(|t| matvec(&self.wv, EMBED_DIM, t)).collect();
        let scale = 1.0 / (EMBED_DIM as f64).sqrt();
        let n = tokens.len();
        let mut pooled = vec![0.0; EMBED_DIM];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                weights[j] = q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            let m = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for w in weights.iter_mut() {
                *w = (*w - m).exp();
                z += *w;
            }
            for d in 0..EMBED_DIM {
                let attended: f64 = (0..n).map(|j| weights[j] * v[j][d]).sum::<f64>() / z;
                pooled[d] += tokens[i][d] + attended;
            }
        }
        for p in pooled.iter_mut() {
            *p /= n as f64;
        }
        let logits = matvec(&self.head, 2, &pooled);
        let (l0, l1) = (logits[0] + self.bias[0], logits[1] + self.bias[1]);
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        let abnormal = e1 / (e0 + e1);
        vec![1.0 - abnormal, abnormal]
    }
}

/// Summary statistics feeding the sanity heads.
fn features(img: &Image8) -> [f64; 5] {
    let (w, h) = (img.width(), img.height());
    let mean = img.mean() / 255.0;
    let var = img
        .pixels()
        .iter()
        .map(|&p| (p as f64 / 255.0 - mean).powi(2))
        .sum::<f64>()
        / (w * h) as f64;
    let half_mean = |x0: usize, x1: usize, y0: usize, y1: usize| {
        let mut s = 0.0;
        let mut n = 0usize;
        for y in y0..y1 {
            for x in x0..x1 {
                s += img.get(x, y) as f64;
                n += 1;
            }
        }
        if n == 0 { 0.0 } else { s / n as f64 / 255.0 }
    };
    let lr = half_mean(0, w / 2, 0, h) - half_mean(w / 2, w, 0, h);
    let tb = half_mean(0, w, 0, h / 2) - half_mean(0, w, h / 2, h);
    [mean, var.sqrt(), lr, tb, 1.0]
}

/// Deterministic, seeded, forward-only stand-ins for every learned stage.
/// Outputs carry no diagnostic meaning; they exercise the contract.
#[derive(Debug, Clone)]
pub struct TinyReference {
    name: String,
    seed: u64,
    resolutions: ResolutionSet,
    vits: BTreeMap<usize, TinyVit>,
    sanity: [[f64; 5]; 3],
    proposal: [f64; 3],
    detection: DetectionConfig,
}

impl TinyReference {
    pub fn new(name: &str, seed: u64) -> Self {
        Self::with_resolutions(name, seed, ResolutionSet::default())
    }

    pub fn with_resolutions(name: &str, seed: u64, resolutions: ResolutionSet) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = || {
            let mut w = [0.0; 5];
            for v in w.iter_mut() {
                *v = rng.random_range(-2.0..2.0);
            }
            w
        };
        let sanity = [head(), head(), head()];
        let proposal = [
            rng.random_range(1.0..4.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..1.0),
        ];
        let vits = resolutions.iter().map(|s| (s, TinyVit::new(s, seed))).collect();
        Self {
            name: name.to_string(),
            seed,
            resolutions,
            vits,
            sanity,
            proposal,
            detection: DetectionConfig::default(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn head(&self, which: usize, img: &Image8) -> f64 {
        let f = features(img);
        sigmoid(self.sanity[which].iter().zip(f).map(|(w, x)| w * x).sum::<f64>() * 4.0)
    }
}

/// Intensity-weighted centroid of a rectangle, or its centre when dark.
fn centroid(img: &Image8, x0: usize, x1: usize, y0: usize, y1: usize) -> Point {
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let v = img.get(x, y) as f64;
            sx += v * x as f64;
            sy += v * y as f64;
            sw += v;
        }
    }
    if sw == 0.0 {
        Point::new((x0 + x1 - 1) as f64 / 2.0, (y0 + y1 - 1) as f64 / 2.0)
    } else {
        Point::new(sx / sw, sy / sw)
    }
}

impl ModelBackend for TinyReference {
    fn name(&self) -> &str {
        &self.name
    }

    fn xray_score(&self, img: &Image8) -> Result<f64, BackendError> {
        Ok(self.head(0, img))
    }

    fn chest_score(&self, img: &Image8) -> Result<f64, BackendError> {
        Ok(self.head(1, img))
    }

    fn view(&self, img: &Image8) -> Result<ViewCall, BackendError> {
        let p = self.head(2, img);
        Ok(if p >= 0.5 {
            ViewCall { view: View::PA, score: p }
        } else {
            ViewCall { view: View::AP, score: 1.0 - p }
        })
    }

    /// Clavicles from the upper-left and upper-right intensity centroids,
    /// spine from the centre column band at three heights. Clamped to the
    /// image.
    fn keypoints(&self, img: &Image8) -> Result<KeypointSet, BackendError> {
        let (w, h) = (img.width(), img.height());
        if w < 4 || h < 4 {
            return Err(BackendError::KeypointsNotFound);
        }
        let band = |y0: usize, y1: usize| centroid(img, w * 3 / 8, (w * 5 / 8).max(w * 3 / 8 + 1), y0, y1);
        let clamp = |p: Point| Point::new(p.x.clamp(0.0, (w - 1) as f64), p.y.clamp(0.0, (h - 1) as f64));
        let left = clamp(centroid(img, 0, w / 2, h / 8, h / 2));
        let right = clamp(centroid(img, w / 2, w, h / 8, h / 2));
        let spine = vec![
            clamp(band(h / 4, h / 2)),
            clamp(band(h / 2, h * 3 / 4)),
            clamp(band(h * 3 / 4, h)),
        ];
        KeypointSet::new(left, right, spine).map_err(|_| BackendError::KeypointsNotFound)
    }

    fn class_probs(&self, img: &Image8, side: usize) -> Result<Vec<f64>, BackendError> {
        let vit = self
            .vits
            .get(&side)
            .ok_or(BackendError::UnsupportedResolution(side))?;
        Ok(vit.forward(img))
    }

    /// Anchors tiled at a fixed stride, scored from local contrast and
    /// regressed by seeded deltas.
    fn proposals(&self, img: &Image8) -> Result<Vec<Detection>, BackendError> {
        let (w, h) = (img.width() as f64, img.height() as f64);
        let gw = (w / PROPOSAL_STRIDE).ceil() as usize;
        let gh = (h / PROPOSAL_STRIDE).ceil() as usize;
        let anchors = generate_anchors(gw, gh, PROPOSAL_STRIDE, &self.detection);
        let global = img.mean() / 255.0;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(1));
        let mut out = Vec::with_capacity(anchors.len());
        for a in &anchors {
            let d = Deltas {
                dx: rng.random_range(-1.0..1.0),
                dy: rng.random_range(-1.0..1.0),
                dw: rng.random_range(-1.0..1.0),
                dh: rng.random_range(-1.0..1.0),
            };
            let label_index = rng.random_range(0..PathologyLabel::COUNT);
            let Ok(bbox) = decode_deltas(&a.bbox, &d, self.detection.delta_weights, Some((w, h))) else {
                continue;
            };
            let (cx, cy) = bbox.center();
            let local = img.get((cx as usize).min(img.width() - 1), (cy as usize).min(img.height() - 1)) as f64 / 255.0;
            let score = sigmoid(self.proposal[0] * (local - global) + self.proposal[1]) * (0.5 + 0.5 * self.proposal[2]);
            let label = PathologyLabel::from_index(label_index).expect("index below label count");
            out.push(
                Detection::new(bbox, label, score)
                    .map_err(|e| BackendError::InvalidOutput(e.to_string()))?,
            );
        }
        Ok(out)
    }

    fn resolutions(&self) -> ResolutionSet {
        self.resolutions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::resize;
    use rand::RngCore;

    fn noise(seed: u64, w: usize, h: usize) -> Image8 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut px = vec![0u8; w * h];
        rng.fill_bytes(&mut px);
        Image8::new(w, h, px).unwrap()
    }

    #[test]
    fn deterministic_across_instances() {
        let img = noise(1, 96, 80);
        let a = TinyReference::new("a", 42);
        let b = TinyReference::new("b", 42);
        assert_eq!(a.verify_xray(&img).unwrap(), b.verify_xray(&img).unwrap());
        assert_eq!(a.identify_chest(&img).unwrap(), b.identify_chest(&img).unwrap());
        assert_eq!(a.classify_view(&img).unwrap(), b.classify_view(&img).unwrap());
        assert_eq!(a.detect_keypoints(&img).unwrap(), b.detect_keypoints(&img).unwrap());
        assert_eq!(a.proposals(&img).unwrap(), b.proposals(&img).unwrap());
        let r = resize(&img, 224).unwrap();
        let pa = a.classify_normal_abnormal(&r, 224).unwrap();
        assert_eq!(pa, b.classify_normal_abnormal(&r, 224).unwrap());
        let c = TinyReference::new("c", 43);
        assert_ne!(pa, c.classify_normal_abnormal(&r, 224).unwrap());
    }

    #[test]
    fn contract_holds_on_random_inputs() {
        let t = TinyReference::new("t", 42);
        for seed in 0..6 {
            let img = noise(seed, 64 + 16 * seed as usize, 128);
            for side in [224, 320, 512] {
                let p = t.classify_normal_abnormal(&resize(&img, side).unwrap(), side).unwrap();
                assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            }
            let kp = t.detect_keypoints(&img).unwrap();
            assert!(kp.within_bounds(img.width(), img.height()));
            assert!(t.classify_view(&img).unwrap().score >= 0.5);
            for d in t.proposals(&img).unwrap() {
                assert!(d.bbox.x2() <= img.width() as f64 && d.bbox.y2() <= img.height() as f64);
            }
        }
    }

    #[test]
    fn unsupported_resolution() {
        let t = TinyReference::new("t", 42);
        let img = noise(0, 300, 300);
        assert_eq!(
            t.classify_normal_abnormal(&img, 300),
            Err(BackendError::UnsupportedResolution(300))
        );
    }
}
