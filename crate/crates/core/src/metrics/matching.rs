use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ConfusionCounts;
use crate::detection::{iou, BBox, Detection};
use crate::labels::PathologyLabel;

/// Reference region drawn by a radiologist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BBox,
    pub label: PathologyLabel,
}

fn box_key(b: &BBox) -> [f64; 4] {
    [b.x1(), b.y1(), b.x2(), b.y2()]
}

/// Total order on box content, so ties never depend on input position.
fn content_cmp(a: &BBox, b: &BBox) -> Ordering {
    box_key(a)
        .iter()
        .zip(box_key(b).iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Greedy matching by descending score. Each prediction claims the unmatched
/// same-label reference with the highest IoU at or above `iou_threshold`.
/// Returns tp/fp/fn with `tn = 0`.
///
/// Ties (equal scores, equal IoUs) break on box coordinates, so shuffling the
/// inputs never changes the counts.
pub fn match_detections(
    preds: &[Detection],
    refs: &[Annotation],
    iou_threshold: f64,
) -> ConfusionCounts {
    let mut order: Vec<&Detection> = preds.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.label.cmp(&b.label))
            .then(content_cmp(&a.bbox, &b.bbox))
    });
    let mut taken = vec![false; refs.len()];
    let mut c = ConfusionCounts::default();
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in refs.iter().enumerate() {
            if taken[i] || r.label != p.label {
                continue;
            }
            let v = iou(&p.bbox, &r.bbox);
            if v < iou_threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, bv)) => {
                    v > bv || (v == bv && content_cmp(&r.bbox, &refs[bi].bbox).is_lt())
                }
            };
            if better {
                best = Some((i, v));
            }
        }
        match best {
            Some((i, _)) => {
                taken[i] = true;
                c.tp += 1;
            }
            None => c.fp += 1,
        }
    }
    c.fn_ = taken.iter().filter(|t| !**t).count() as u64;
    c
}
