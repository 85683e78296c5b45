use super::{BBox, DetectionConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub bbox: BBox,
    /// Square root of the anchor area.
    pub size: f64,
    /// Height over width.
    pub ratio: f64,
}

/// Tiles `sizes x ratios` anchors over every grid cell, centred at
/// `((i + 0.5) * stride, (j + 0.5) * stride)`. Ratios preserve area:
/// `w = s / sqrt(r)`, `h = s * sqrt(r)`.
///
/// Order is row-major over cells, then size, then ratio.
pub fn generate_anchors(
    grid_w: usize,
    grid_h: usize,
    stride: f64,
    cfg: &DetectionConfig,
) -> Vec<Anchor> {
    let per_cell = cfg.anchor_sizes.len() * cfg.aspect_ratios.len();
    let mut out = Vec::with_capacity(grid_w * grid_h * per_cell);
    for j in 0..grid_h {
        for i in 0..grid_w {
            let cx = (i as f64 + 0.5) * stride;
            let cy = (j as f64 + 0.5) * stride;
            for &size in &cfg.anchor_sizes {
                for &ratio in &cfg.aspect_ratios {
                    let root = ratio.sqrt();
                    let (w, h) = (size / root, size * root);
                    let bbox = BBox::from_center(cx, cy, w, h)
                        .expect("positive sizes and ratios give positive-area anchors");
                    out.push(Anchor { bbox, size, ratio });
                }
            }
        }
    }
    out
}
