use serde::{Deserialize, Serialize};

use super::{iou, Detection, DetectionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalMode {
    Train,
    Infer,
}

/// Indices ordered by score descending, ties by original index.
fn ranked(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Greedy per-label suppression. A candidate is dropped when its IoU with an
/// already kept box of the same label is strictly greater than `threshold`.
/// Output is ordered by score descending with stable ties.
pub fn nms(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in ranked(dets) {
        let d = &dets[i];
        let suppressed = kept
            .iter()
            .any(|k| k.label == d.label && iou(&k.bbox, &d.bbox) > threshold);
        if !suppressed {
            kept.push(*d);
        }
    }
    kept
}

/// Keeps the `k` best-scoring proposals, `k` chosen by mode.
pub fn select_top_proposals(
    dets: &[Detection],
    mode: ProposalMode,
    cfg: &DetectionConfig,
) -> Vec<Detection> {
    let k = match mode {
        ProposalMode::Train => cfg.top_proposals_train,
        ProposalMode::Infer => cfg.top_proposals_infer,
    };
    ranked(dets).into_iter().take(k).map(|i| dets[i]).collect()
}
