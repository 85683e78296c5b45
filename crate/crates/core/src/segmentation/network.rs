use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{gate_inter_channels, gate_params, AttentionGate};
use super::config::{filter_schedule, SegVariant, SegmentationConfig};
use super::tensor::{conv_params, softmax_channels, Conv2d, FeatureMap};
use super::SegmentationError;
use crate::image::Image8;

/// Largest network instantiated for execution. Full-size configurations are
/// audited through [`parameter_count`] only.
pub const MAX_EXECUTABLE_PARAMS: usize = 4_000_000;

/// Two 3x3 convolutions, each followed by ReLU.
#[derive(Debug, Clone)]
struct DoubleConv(Conv2d, Conv2d);

fn double_conv_params(c_in: usize, c_out: usize) -> usize {
    conv_params(c_in, c_out, 3) + conv_params(c_out, c_out, 3)
}

impl DoubleConv {
    fn init(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize) -> Self {
        Self(Conv2d::init(rng, c_in, c_out, 3), Conv2d::init(rng, c_out, c_out, 3))
    }

    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap, SegmentationError> {
        let h = self.0.forward(x)?.relu();
        Ok(self.1.forward(&h)?.relu())
    }

    fn parameter_count(&self) -> usize {
        self.0.parameter_count() + self.1.parameter_count()
    }
}

/// Layer `i` sees `c_in + i * k` channels and emits `k`; outputs are concatenated.
#[derive(Debug, Clone)]
struct DenseBlock(Vec<Conv2d>);

pub fn dense_layer_params(c_in: usize, layer: usize, k: usize) -> usize {
    conv_params(c_in + layer * k, k, 3)
}

fn dense_block_params(c_in: usize, layers: usize, k: usize) -> usize {
    (0..layers).map(|i| dense_layer_params(c_in, i, k)).sum()
}

impl DenseBlock {
    fn init(rng: &mut ChaCha8Rng, c_in: usize, layers: usize, k: usize) -> Self {
        Self((0..layers).map(|i| Conv2d::init(rng, c_in + i * k, k, 3)).collect())
    }

    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap, SegmentationError> {
        let mut acc = x.clone();
        for layer in &self.0 {
            let y = layer.forward(&acc)?.relu();
            acc = FeatureMap::concat(&[&acc, &y])?;
        }
        Ok(acc)
    }

    fn parameter_count(&self) -> usize {
        self.0.iter().map(Conv2d::parameter_count).sum()
    }
}

#[derive(Debug, Clone)]
struct AttentionNet {
    encoder: Vec<DoubleConv>,
    /// Indexed by target level `0..depth-1`.
    up: Vec<Conv2d>,
    gates: Vec<AttentionGate>,
    decoder: Vec<DoubleConv>,
}

#[derive(Debug, Clone)]
struct NestedNet {
    /// `nodes[i][j]` is node `X(i, j)`.
    nodes: Vec<Vec<DoubleConv>>,
}

#[derive(Debug, Clone)]
struct DenseNet {
    stem: Conv2d,
    encoder: Vec<DenseBlock>,
    /// Indexed by target level `0..blocks-1`.
    transitions: Vec<Conv2d>,
    decoder: Vec<DenseBlock>,
}

#[derive(Debug, Clone)]
enum Body {
    Attention(AttentionNet),
    Nested(NestedNet),
    Dense(DenseNet),
}

/// A seeded, untrained instance of one U-Net variant.
#[derive(Debug, Clone)]
pub struct SegNet {
    cfg: SegmentationConfig,
    body: Body,
    head: Conv2d,
}

/// Inputs feeding node `X(i, j)` of the nested network: `X(i, 0..j)` on the
/// same level plus the upsampled `X(i+1, j-1)`. Encoder nodes (`j = 0`)
/// take the pooled `X(i-1, 0)` instead.
pub fn nested_inputs(i: usize, j: usize) -> Vec<(usize, usize)> {
    if j == 0 {
        return if i == 0 { Vec::new() } else { vec![(i - 1, 0)] };
    }
    let mut v: Vec<(usize, usize)> = (0..j).map(|jj| (i, jj)).collect();
    v.push((i + 1, j - 1));
    v
}

/// Closed-form trainable parameter count of the configured architecture.
pub fn parameter_count(cfg: &SegmentationConfig) -> usize {
    let f = filter_schedule(cfg);
    let head_in;
    let body = match cfg.variant {
        SegVariant::AttentionUNet => {
            head_in = f[0];
            let enc: usize = (0..cfg.depth)
                .map(|l| double_conv_params(if l == 0 { 1 } else { f[l - 1] }, f[l]))
                .sum();
            let dec: usize = (0..cfg.depth - 1)
                .map(|l| {
                    conv_params(f[l + 1], f[l], 1)
                        + gate_params(f[l], f[l], gate_inter_channels(f[l]))
                        + double_conv_params(2 * f[l], f[l])
                })
                .sum();
            enc + dec
        }
        SegVariant::UNetPlusPlus => {
            head_in = f[0];
            let mut total = 0;
            for i in 0..cfg.depth {
                for j in 0..cfg.depth - i {
                    let c_in = match j {
                        0 if i == 0 => 1,
                        0 => f[i - 1],
                        _ => j * f[i] + f[i + 1],
                    };
                    total += double_conv_params(c_in, f[i]);
                }
            }
            total
        }
        SegVariant::DenseUNet => {
            let (l, k, b) = (cfg.layers_per_block, cfg.growth_rate_k, cfg.dense_blocks);
            let mut total = conv_params(1, cfg.base_filters, 3);
            let mut c_in = cfg.base_filters;
            for &c_out in &f {
                total += dense_block_params(c_in, l, k);
                c_in = c_out;
            }
            let mut cur = f[b - 1];
            for lvl in (0..b - 1).rev() {
                total += conv_params(cur + f[lvl], f[lvl], 1) + dense_block_params(f[lvl], l, k);
                cur = f[lvl] + l * k;
            }
            head_in = cur;
            total
        }
    };
    body + conv_params(head_in, 2, 1)
}

impl SegNet {
    pub fn build(cfg: &SegmentationConfig, seed: u64) -> Result<Self, SegmentationError> {
        cfg.validate()?;
        let count = parameter_count(cfg);
        if count > MAX_EXECUTABLE_PARAMS {
            return Err(SegmentationError::BackendUnavailable(format!(
                "{:?} with {count} parameters exceeds the executable limit",
                cfg.variant
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = filter_schedule(cfg);
        let d = cfg.depth;
        let (body, head_in) = match cfg.variant {
            SegVariant::AttentionUNet => {
                let encoder = (0..d)
                    .map(|l| DoubleConv::init(&mut rng, if l == 0 { 1 } else { f[l - 1] }, f[l]))
                    .collect();
                let mut up = Vec::new();
                let mut gates = Vec::new();
                let mut decoder = Vec::new();
                for l in 0..d - 1 {
                    up.push(Conv2d::init(&mut rng, f[l + 1], f[l], 1));
                    gates.push(AttentionGate::init(&mut rng, f[l], f[l]));
                    decoder.push(DoubleConv::init(&mut rng, 2 * f[l], f[l]));
                }
                let net = AttentionNet { encoder, up, gates, decoder };
                (Body::Attention(net), f[0])
            }
            SegVariant::UNetPlusPlus => {
                let mut nodes = Vec::new();
                for i in 0..d {
                    let mut row = Vec::new();
                    for j in 0..d - i {
                        let c_in: usize = match j {
                            0 if i == 0 => 1,
                            _ => nested_inputs(i, j).iter().map(|&(ii, _)| f[ii]).sum(),
                        };
                        row.push(DoubleConv::init(&mut rng, c_in, f[i]));
                    }
                    nodes.push(row);
                }
                (Body::Nested(NestedNet { nodes }), f[0])
            }
            SegVariant::DenseUNet => {
                let (l, k, b) = (cfg.layers_per_block, cfg.growth_rate_k, cfg.dense_blocks);
                let stem = Conv2d::init(&mut rng, 1, cfg.base_filters, 3);
                let mut encoder = Vec::new();
                let mut c_in = cfg.base_filters;
                for &c_out in &f {
                    encoder.push(DenseBlock::init(&mut rng, c_in, l, k));
                    c_in = c_out;
                }
                let mut transitions: Vec<Option<Conv2d>> = vec![None; b - 1];
                let mut decoder: Vec<Option<DenseBlock>> = vec![None; b - 1];
                let mut cur = f[b - 1];
                for lvl in (0..b - 1).rev() {
                    transitions[lvl] = Some(Conv2d::init(&mut rng, cur + f[lvl], f[lvl], 1));
                    decoder[lvl] = Some(DenseBlock::init(&mut rng, f[lvl], l, k));
                    cur = f[lvl] + l * k;
                }
                let net = DenseNet {
                    stem,
                    encoder,
                    transitions: transitions.into_iter().map(Option::unwrap).collect(),
                    decoder: decoder.into_iter().map(Option::unwrap).collect(),
                };
                (Body::Dense(net), cur)
            }
        };
        let head = Conv2d::init(&mut rng, head_in, 2, 1);
        Ok(Self {
            cfg: cfg.clone(),
            body,
            head,
        })
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.cfg
    }

    /// Parameters actually allocated; equals [`parameter_count`].
    pub fn weight_count(&self) -> usize {
        let body = match &self.body {
            Body::Attention(n) => {
                n.encoder.iter().map(DoubleConv::parameter_count).sum::<usize>()
                    + n.up.iter().map(Conv2d::parameter_count).sum::<usize>()
                    + n.gates.iter().map(AttentionGate::parameter_count).sum::<usize>()
                    + n.decoder.iter().map(DoubleConv::parameter_count).sum::<usize>()
            }
            Body::Nested(n) => n.nodes.iter().flatten().map(DoubleConv::parameter_count).sum(),
            Body::Dense(n) => {
                n.stem.parameter_count()
                    + n.encoder.iter().map(DenseBlock::parameter_count).sum::<usize>()
                    + n.transitions.iter().map(Conv2d::parameter_count).sum::<usize>()
                    + n.decoder.iter().map(DenseBlock::parameter_count).sum::<usize>()
            }
        };
        body + self.head.parameter_count()
    }

    /// Foreground probability per pixel, same size as `crop`. Inputs are
    /// zero-padded on the bottom/right to a multiple of `2^(depth-1)` and the
    /// output is cropped back.
    pub fn forward(&self, crop: &Image8) -> Result<Vec<f32>, SegmentationError> {
        let (h, w) = (crop.height(), crop.width());
        let m = self.cfg.side_multiple();
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let data = crop.pixels().iter().map(|&p| f32::from(p) / 255.0).collect();
        let x = FeatureMap::from_vec(1, h, w, data)?.pad_to(ph, pw);
        let hard = self.cfg.hard_gate.then_some(self.cfg.gate_threshold as f32);
        let features = match &self.body {
            Body::Attention(n) => forward_attention(n, &x, hard)?,
            Body::Nested(n) => forward_nested(n, &x)?,
            Body::Dense(n) => forward_dense(n, &x)?,
        };
        let probs = softmax_channels(&self.head.forward(&features)?).crop_to(h, w);
        Ok(probs.plane(1).to_vec())
    }
}

fn forward_attention(
    n: &AttentionNet,
    x: &FeatureMap,
    hard: Option<f32>,
) -> Result<FeatureMap, SegmentationError> {
    let mut skips = Vec::new();
    let mut cur = x.clone();
    for (l, block) in n.encoder.iter().enumerate() {
        if l > 0 {
            cur = cur.maxpool2();
        }
        cur = block.forward(&cur)?;
        skips.push(cur.clone());
    }
    for l in (0..n.decoder.len()).rev() {
        let up = n.up[l].forward(&cur.upsample2())?;
        let gated = n.gates[l].gate(&up, &skips[l], hard)?;
        cur = n.decoder[l].forward(&FeatureMap::concat(&[&gated, &up])?)?;
    }
    Ok(cur)
}

fn forward_nested(n: &NestedNet, x: &FeatureMap) -> Result<FeatureMap, SegmentationError> {
    let d = n.nodes.len();
    let mut out: Vec<Vec<Option<FeatureMap>>> = (0..d).map(|i| vec![None; d - i]).collect();
    for i in 0..d {
        let input = if i == 0 {
            x.clone()
        } else {
            out[i - 1][0].as_ref().expect("encoder order").maxpool2()
        };
        out[i][0] = Some(n.nodes[i][0].forward(&input)?);
    }
    // Anti-diagonal order guarantees every input exists before it is used.
    for j in 1..d {
        for i in 0..d - j {
            let mut parts: Vec<FeatureMap> = Vec::with_capacity(j + 1);
            for (ii, jj) in nested_inputs(i, j) {
                let f = out[ii][jj].as_ref().expect("dependency computed");
                parts.push(if ii == i { f.clone() } else { f.upsample2() });
            }
            let refs: Vec<&FeatureMap> = parts.iter().collect();
            out[i][j] = Some(n.nodes[i][j].forward(&FeatureMap::concat(&refs)?)?);
        }
    }
    Ok(out[0][d - 1].take().expect("final node"))
}

fn forward_dense(n: &DenseNet, x: &FeatureMap) -> Result<FeatureMap, SegmentationError> {
    let mut cur = n.stem.forward(x)?.relu();
    let mut skips = Vec::new();
    for (b, block) in n.encoder.iter().enumerate() {
        if b > 0 {
            cur = cur.maxpool2();
        }
        cur = block.forward(&cur)?;
        skips.push(cur.clone());
    }
    for lvl in (0..n.decoder.len()).rev() {
        let joined = FeatureMap::concat(&[&cur.upsample2(), &skips[lvl]])?;
        let t = n.transitions[lvl].forward(&joined)?.relu();
        cur = n.decoder[lvl].forward(&t)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn crop(side: usize, seed: u8) -> Image8 {
        Image8::from_fn(side, side, |x, y| ((x * 7 + y * 13) as u8).wrapping_mul(seed | 1)).unwrap()
    }

    #[test]
    fn toy_shapes_and_determinism() {
        for v in SegVariant::ALL {
            let cfg = SegmentationConfig::toy(v);
            let net = SegNet::build(&cfg, 11).unwrap();
            let a = net.forward(&crop(32, 3)).unwrap();
            assert_eq!(a.len(), 32 * 32);
            assert!(a.iter().all(|p| (0.0..=1.0).contains(p)));
            let b = SegNet::build(&cfg, 11).unwrap().forward(&crop(32, 3)).unwrap();
            assert_eq!(a, b, "{v:?} not deterministic");
        }
    }

    #[test]
    fn counted_weights_match_closed_form() {
        for v in SegVariant::ALL {
            let cfg = SegmentationConfig::toy(v);
            assert_eq!(SegNet::build(&cfg, 0).unwrap().weight_count(), parameter_count(&cfg));
        }
        let dense = SegmentationConfig::paper_scale(SegVariant::DenseUNet);
        assert_eq!(SegNet::build(&dense, 0).unwrap().weight_count(), parameter_count(&dense));
    }

    #[test]
    fn paper_scale_counts_grow_with_depth() {
        for v in [SegVariant::AttentionUNet, SegVariant::UNetPlusPlus] {
            let five = SegmentationConfig::paper_scale(v);
            let four = SegmentationConfig { depth: 4, ..five.clone() };
            assert!(parameter_count(&five) > parameter_count(&four));
            assert!(matches!(
                SegNet::build(&five, 0),
                Err(SegmentationError::BackendUnavailable(_))
            ));
        }
    }

    #[test]
    fn dense_layer_accounting() {
        // Layer i of a block entered with 32 channels sees 32 + 12 i inputs.
        for i in 0..4 {
            assert_eq!(dense_layer_params(32, i, 12), (32 + 12 * i) * 12 * 9 + 12);
        }
    }

    #[test]
    fn nested_wiring_audit() {
        for d in 2..=5 {
            let mut edges = 0;
            for i in 0..d {
                for j in 1..d - i {
                    let inputs = nested_inputs(i, j);
                    assert_eq!(inputs.len(), j + 1);
                    assert!(inputs[..j].iter().all(|&(ii, jj)| ii == i && jj < j));
                    assert_eq!(inputs[j], (i + 1, j - 1));
                    edges += inputs.len();
                }
            }
            // Sum over decoder nodes of (j + 1).
            let formula: usize = (0..d).map(|i| (1..d - i).map(|j| j + 1).sum::<usize>()).sum();
            assert_eq!(edges, formula);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn output_matches_input_size(v in 0usize..3, w in 5usize..40, h in 5usize..40, seed in any::<u64>()) {
            let cfg = SegmentationConfig::toy(SegVariant::ALL[v]);
            let net = SegNet::build(&cfg, seed).unwrap();
            let img = Image8::from_fn(w, h, |x, y| (x * y) as u8).unwrap();
            prop_assert_eq!(net.forward(&img).unwrap().len(), w * h);
        }

        #[test]
        fn closed_form_matches_allocation(v in 0usize..3, depth in 2usize..5, base in 1usize..6, k in 1usize..5, l in 0usize..4) {
            let mut cfg = SegmentationConfig::toy(SegVariant::ALL[v]);
            cfg.depth = depth;
            cfg.dense_blocks = depth;
            cfg.base_filters = base;
            cfg.growth_rate_k = k;
            cfg.layers_per_block = l;
            prop_assert_eq!(SegNet::build(&cfg, 1).unwrap().weight_count(), parameter_count(&cfg));
        }
    }
}
