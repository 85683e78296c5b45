use rand::Rng;

use super::SegmentationError;

/// Channel-major `(C, H, W)` grid of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, SegmentationError> {
        if data.len() != channels * height * width {
            return Err(SegmentationError::ShapeMismatch {
                expected: (channels * height, width),
                found: (data.len(), 1),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn relu(mut self) -> Self {
        for v in &mut self.data {
            *v = v.max(0.0);
        }
        self
    }

    pub fn sigmoid(mut self) -> Self {
        for v in &mut self.data {
            *v = sigmoid(*v);
        }
        self
    }

    /// 2x2 max pooling; odd trailing rows/columns are dropped.
    pub fn maxpool2(&self) -> Self {
        let (h, w) = (self.height / 2, self.width / 2);
        let mut out = Self::zeros(self.channels, h, w);
        for c in 0..self.channels {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..h {
                for x in 0..w {
                    let i = 2 * y * self.width + 2 * x;
                    dst[y * w + x] = src[i]
                        .max(src[i + 1])
                        .max(src[i + self.width])
                        .max(src[i + self.width + 1]);
                }
            }
        }
        out
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&self) -> Self {
        let (h, w) = (self.height * 2, self.width * 2);
        let mut out = Self::zeros(self.channels, h, w);
        for c in 0..self.channels {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..h {
                for x in 0..w {
                    dst[y * w + x] = src[(y / 2) * self.width + x / 2];
                }
            }
        }
        out
    }

    /// Stacks along the channel axis.
    pub fn concat(parts: &[&FeatureMap]) -> Result<Self, SegmentationError> {
        let first = parts.first().ok_or(SegmentationError::EmptyInput)?;
        let spatial = first.spatial();
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.spatial() != spatial {
                return Err(SegmentationError::ShapeMismatch {
                    expected: spatial,
                    found: p.spatial(),
                });
            }
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Ok(Self {
            channels,
            height: spatial.0,
            width: spatial.1,
            data,
        })
    }

    /// Zero-pads on the bottom and right.
    pub fn pad_to(&self, height: usize, width: usize) -> Self {
        let mut out = Self::zeros(self.channels, height, width);
        for c in 0..self.channels {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..self.height.min(height) {
                let n = self.width.min(width);
                dst[y * width..y * width + n].copy_from_slice(&src[y * self.width..y * self.width + n]);
            }
        }
        out
    }

    /// Keeps the top-left `height x width` window.
    pub fn crop_to(&self, height: usize, width: usize) -> Self {
        self.pad_to(height.min(self.height), width.min(self.width))
    }

    /// Elementwise product with a single-channel map broadcast over channels.
    pub fn scale_by(&self, coeff: &FeatureMap) -> Result<Self, SegmentationError> {
        if coeff.spatial() != self.spatial() || coeff.channels != 1 {
            return Err(SegmentationError::ShapeMismatch {
                expected: self.spatial(),
                found: coeff.spatial(),
            });
        }
        let mut out = self.clone();
        for c in 0..self.channels {
            for (v, a) in out.plane_mut(c).iter_mut().zip(coeff.plane(0)) {
                *v *= a;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &FeatureMap) -> Result<Self, SegmentationError> {
        if other.spatial() != self.spatial() || other.channels != self.channels {
            return Err(SegmentationError::ShapeMismatch {
                expected: self.spatial(),
                found: other.spatial(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(self.with_data(data))
    }

    fn with_data(&self, data: Vec<f32>) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Same-padded square convolution with bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

/// Weight plus bias count of a `k x k` convolution.
pub const fn conv_params(c_in: usize, c_out: usize, kernel: usize) -> usize {
    c_in * c_out * kernel * kernel + c_out
}

impl Conv2d {
    /// He-uniform initialisation drawn from `rng`.
    pub fn init<R: Rng>(rng: &mut R, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        let fan_in = (in_channels * kernel * kernel) as f32;
        let bound = (6.0 / fan_in).sqrt();
        let weights = (0..in_channels * out_channels * kernel * kernel)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..out_channels).map(|_| rng.random_range(-0.05..0.05)).collect();
        Self {
            in_channels,
            out_channels,
            kernel,
            weights,
            bias,
        }
    }

    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weights: vec![0.0; in_channels * out_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap, SegmentationError> {
        if x.channels != self.in_channels {
            return Err(SegmentationError::ShapeMismatch {
                expected: (self.in_channels, 0),
                found: (x.channels, 0),
            });
        }
        let (h, w) = x.spatial();
        let k = self.kernel;
        let r = (k / 2) as isize;
        let mut out = FeatureMap::zeros(self.out_channels, h, w);
        for o in 0..self.out_channels {
            let dst = out.plane_mut(o);
            dst.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let src = x.plane(i);
                for ky in 0..k {
                    let dy = ky as isize - r;
                    for kx in 0..k {
                        let dx = kx as isize - r;
                        let wv = self.weights[((o * self.in_channels + i) * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let x_lo = (-dx).max(0) as usize;
                        let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                        for y in 0..h {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                            let drow = &mut dst[y * w..(y + 1) * w];
                            for xx in x_lo..x_hi {
                                drow[xx] += wv * srow[(xx as isize + dx) as usize];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Per-pixel softmax over the channel axis.
pub fn softmax_channels(x: &FeatureMap) -> FeatureMap {
    let n = x.height * x.width;
    let mut data = vec![0.0f32; x.data.len()];
    for p in 0..n {
        let m = (0..x.channels).map(|c| x.data[c * n + p]).fold(f32::MIN, f32::max);
        let mut sum = 0.0;
        for c in 0..x.channels {
            let e = (x.data[c * n + p] - m).exp();
            data[c * n + p] = e;
            sum += e;
        }
        for c in 0..x.channels {
            data[c * n + p] /= sum;
        }
    }
    x.with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct definition of same-padded convolution, one output at a time.
    fn naive_conv(c: &Conv2d, x: &FeatureMap) -> FeatureMap {
        let (h, w) = x.spatial();
        let k = c.kernel as isize;
        let mut out = FeatureMap::zeros(c.out_channels, h, w);
        for o in 0..c.out_channels {
            for y in 0..h as isize {
                for xx in 0..w as isize {
                    let mut acc = c.bias[o];
                    for i in 0..c.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y + ky - k / 2;
                                let sx = xx + kx - k / 2;
                                if sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize {
                                    let wv = c.weights[((o * c.in_channels + i) * c.kernel + ky as usize) * c.kernel + kx as usize];
                                    acc += wv * x.plane(i)[sy as usize * w + sx as usize];
                                }
                            }
                        }
                    }
                    out.plane_mut(o)[y as usize * w + xx as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = FeatureMap::from_vec(2, 5, 7, (0..70).map(|v| (v as f32 * 0.37).sin()).collect()).unwrap();
        for k in [1, 3] {
            let c = Conv2d::init(&mut rng, 2, 3, k);
            let fast = c.forward(&x).unwrap();
            let slow = naive_conv(&c, &x);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn conv_parameter_formula() {
        assert_eq!(conv_params(1, 64, 3), 640);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(Conv2d::init(&mut rng, 1, 64, 3).parameter_count(), 640);
    }

    #[test]
    fn pool_upsample_pad() {
        let x = FeatureMap::from_vec(1, 2, 2, vec![1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!(x.maxpool2().data(), &[4.0]);
        let up = x.upsample2();
        assert_eq!(up.spatial(), (4, 4));
        assert_eq!(&up.data()[..4], &[1.0, 1.0, 4.0, 4.0]);
        let padded = x.pad_to(3, 3);
        assert_eq!(padded.data(), &[1.0, 4.0, 0.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(padded.crop_to(2, 2), x);
    }

    #[test]
    fn softmax_sums_to_one() {
        let x = FeatureMap::from_vec(2, 1, 2, vec![0.0, 5.0, 0.0, -5.0]).unwrap();
        let s = softmax_channels(&x);
        assert!((s.data()[0] - 0.5).abs() < 1e-7);
        assert!((s.data()[1] + s.data()[3] - 1.0).abs() < 1e-6);
    }
}
