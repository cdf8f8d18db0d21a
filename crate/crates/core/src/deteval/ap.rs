use serde::{Deserialize, Serialize};

/// Precision/recall after each detection of a confidence ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub num_gt: usize,
}

impl PRCurve {
    /// Builds the curve from true-positive flags in ranking order.
    pub fn from_ranked(tp_flags: &[bool], num_gt: usize) -> Self {
        let mut recall = Vec::with_capacity(tp_flags.len());
        let mut precision = Vec::with_capacity(tp_flags.len());
        let mut tp = 0usize;
        for (i, &is_tp) in tp_flags.iter().enumerate() {
            if is_tp {
                tp += 1;
            }
            recall.push(if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 });
            precision.push(tp as f64 / (i + 1) as f64);
        }
        Self { recall, precision, num_gt }
    }
}

/// All-points interpolated average precision: the area under the running
/// maximum of precision taken from the high-recall end.
///
/// Returns `None` when the class has no ground truth.
pub fn average_precision(curve: &PRCurve) -> Option<f64> {
    if curve.num_gt == 0 {
        return None;
    }
    let n = curve.precision.len();
    let mut envelope = curve.precision.clone();
    for i in (0..n.saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (&r, &p) in curve.recall.iter().zip(&envelope) {
        if r > prev_recall {
            ap += (r - prev_recall) * p;
        }
        prev_recall = r;
    }
    Some(ap.clamp(0.0, 1.0))
}
