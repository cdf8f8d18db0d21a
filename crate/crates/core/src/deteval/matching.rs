use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::Detection;
use crate::dataset::BoundingBox;

/// Intersection over union of two boxes; 0 for disjoint boxes and for a pair
/// of zero-area boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Outcome for one ranked detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    /// Position of the detection in the caller's input list.
    pub input_index: usize,
    pub confidence: f64,
    /// Highest IoU with any ground truth of the image/class (ranking tiebreak).
    pub best_iou: f64,
    pub is_true_positive: bool,
    pub matched_gt: Option<usize>,
}

/// Matching of one image/class: entries in ranking order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub entries: Vec<MatchEntry>,
    pub num_gt: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.entries.iter().filter(|e| e.is_true_positive).count()
    }
}

/// Ranking order: confidence descending, then best IoU descending, then input
/// position ascending.
pub(crate) fn rank_cmp(a: (f64, f64, usize), b: (f64, f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.total_cmp(&a.1))
        .then_with(|| a.2.cmp(&b.2))
}

/// Greedy confidence-ordered matching for one image and class.
///
/// Each detection takes the still-unmatched ground truth with the highest IoU
/// at or above `iou_threshold`; detections left without a partner (including
/// duplicates of an already matched box) are false positives.
pub fn match_detections(dets: &[Detection], gts: &[BoundingBox], iou_threshold: f64) -> MatchResult {
    let indexed: Vec<(usize, &Detection)> = dets.iter().enumerate().collect();
    match_indexed(&indexed, gts, iou_threshold)
}

pub(crate) fn match_indexed(
    dets: &[(usize, &Detection)],
    gts: &[BoundingBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut scored: Vec<(usize, &Detection, Vec<f64>, f64)> = dets
        .iter()
        .map(|&(idx, d)| {
            let bb = d.bbox();
            let ious: Vec<f64> = gts.iter().map(|g| iou(&bb, g)).collect();
            let best = ious.iter().copied().fold(0.0, f64::max);
            (idx, d, ious, best)
        })
        .collect();
    scored.sort_by(|a, b| rank_cmp((a.1.confidence, a.3, a.0), (b.1.confidence, b.3, b.0)));

    let mut taken = vec![false; gts.len()];
    let entries = scored
        .into_iter()
        .map(|(input_index, d, ious, best_iou)| {
            let mut choice: Option<(usize, f64)> = None;
            for (g, &v) in ious.iter().enumerate() {
                if taken[g] || v < iou_threshold {
                    continue;
                }
                if choice.is_none_or(|(_, cv)| v > cv) {
                    choice = Some((g, v));
                }
            }
            if let Some((g, _)) = choice {
                taken[g] = true;
            }
            MatchEntry {
                input_index,
                confidence: d.confidence,
                best_iou,
                is_true_positive: choice.is_some(),
                matched_gt: choice.map(|(g, _)| g),
            }
        })
        .collect();
    MatchResult { entries, num_gt: gts.len() }
}
