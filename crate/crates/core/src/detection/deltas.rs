use serde::{Deserialize, Serialize};

use super::{BBox, DeltaWeights, GeometryError};

/// Normalised box offsets relative to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

/// `dx = ((gx - ax) / aw) / wx`, `dw = ln(gw / aw) / ww`, and likewise for y and h.
pub fn encode_deltas(anchor: &BBox, target: &BBox, w: DeltaWeights) -> Deltas {
    let (ax, ay) = anchor.center();
    let (gx, gy) = target.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    Deltas {
        dx: (gx - ax) / aw / w.x,
        dy: (gy - ay) / ah / w.y,
        dw: (target.width() / aw).ln() / w.w,
        dh: (target.height() / ah).ln() / w.h,
    }
}

/// Inverse of [`encode_deltas`]. With `clip = Some((width, height))` the
/// result is clamped to the image, and a box that collapses fails with
/// [`GeometryError::DegenerateResult`].
pub fn decode_deltas(
    anchor: &BBox,
    d: &Deltas,
    w: DeltaWeights,
    clip: Option<(f64, f64)>,
) -> Result<BBox, GeometryError> {
    let (ax, ay) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let cx = ax + d.dx * w.x * aw;
    let cy = ay + d.dy * w.y * ah;
    let gw = aw * (d.dw * w.w).exp();
    let gh = ah * (d.dh * w.h).exp();
    let decoded =
        BBox::from_center(cx, cy, gw, gh).map_err(|_| GeometryError::DegenerateResult)?;
    match clip {
        Some((width, height)) => decoded.clip(width, height),
        None => Ok(decoded),
    }
}
