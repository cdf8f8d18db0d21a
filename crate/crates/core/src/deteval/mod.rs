//! Detection quality metrics: IoU, greedy matching, PR curves, AP and mAP.
//!
//! Matching is done per image; detections of a class are then ranked
//! globally across the whole test set to form the precision/recall curve.

mod ap;
mod matching;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ap::{average_precision, PRCurve};
pub use matching::{iou, match_detections, MatchEntry, MatchResult};

use crate::dataset::{BoundingBox, Dataset};
use crate::exec;

/// Standard matching threshold.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DetEvalError {
    #[error("prediction references unknown image '{0}'")]
    UnknownImage(String),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One predicted box. Serialized flat, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, bbox: BoundingBox, confidence: f64) -> Self {
        Self {
            image_id: image_id.into(),
            class_id: bbox.class_id,
            cx: bbox.cx,
            cy: bbox.cy,
            w: bbox.w,
            h: bbox.h,
            confidence,
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.class_id, self.cx, self.cy, self.w, self.h)
    }

    pub fn check(&self) -> Result<(), DetEvalError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(DetEvalError::InvalidDetection(format!(
                "confidence {} outside [0, 1] for image '{}'",
                self.confidence, self.image_id
            )));
        }
        let finite = [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w < 0.0 || self.h < 0.0 {
            return Err(DetEvalError::InvalidDetection(format!(
                "malformed box for image '{}'",
                self.image_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub label: String,
    /// `None` when the class has no ground truth in the test set.
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub per_class: BTreeMap<u32, ClassEval>,
    /// Unweighted mean of AP over classes present in the ground truth.
    pub map: f64,
    /// Classes left out of the mean because they have no ground truth.
    pub excluded_classes: Vec<u32>,
}

impl EvalReport {
    pub fn ap(&self, class_id: u32) -> Option<f64> {
        self.per_class.get(&class_id).and_then(|c| c.ap)
    }

    /// Plain-text table, one row per class plus the mean.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "class", "AP", "GT", "dets", "TP", "FP", "FN"
        );
        for (id, c) in &self.per_class {
            let ap = c.ap.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>6} {:>6} {:>6} {:>6} {:>6}",
                format!("{id}:{}", c.label),
                ap,
                c.num_gt,
                c.num_detections,
                c.true_positives,
                c.false_positives,
                c.false_negatives
            );
        }
        let _ = writeln!(out, "mAP@{:.2} = {:.4}", self.iou_threshold, self.map);
        out
    }
}

/// Ranked, pooled matching for one class across all images.
pub fn rank_class(
    predictions: &[Detection],
    ds: &Dataset,
    class_id: u32,
    iou_threshold: f64,
) -> Result<(Vec<MatchEntry>, usize), DetEvalError> {
    let index: HashMap<&str, usize> =
        ds.records().iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut per_image: Vec<Vec<(usize, &Detection)>> = vec![Vec::new(); ds.len()];
    for (i, d) in predictions.iter().enumerate() {
        let &rec = index
            .get(d.image_id.as_str())
            .ok_or_else(|| DetEvalError::UnknownImage(d.image_id.clone()))?;
        if d.class_id == class_id {
            per_image[rec].push((i, d));
        }
    }
    Ok(pooled(ds, &per_image, class_id, iou_threshold))
}

fn pooled(
    ds: &Dataset,
    per_image: &[Vec<(usize, &Detection)>],
    class_id: u32,
    iou_threshold: f64,
) -> (Vec<MatchEntry>, usize) {
    let records = ds.records();
    let results = exec::map_range(records.len(), |i| {
        let gts: Vec<BoundingBox> =
            records[i].annotations.iter().copied().filter(|b| b.class_id == class_id).collect();
        matching::match_indexed(&per_image[i], &gts, iou_threshold)
    });
    let num_gt = results.iter().map(|r| r.num_gt).sum();
    let mut entries: Vec<MatchEntry> = results.into_iter().flat_map(|r| r.entries).collect();
    entries.sort_by(|a, b| {
        matching::rank_cmp(
            (a.confidence, a.best_iou, a.input_index),
            (b.confidence, b.best_iou, b.input_index),
        )
    });
    (entries, num_gt)
}

/// Evaluates predictions against the dataset's ground truth.
pub fn evaluate(
    predictions: &[Detection],
    ds: &Dataset,
    iou_threshold: f64,
) -> Result<EvalReport, DetEvalError> {
    let index: HashMap<&str, usize> =
        ds.records().iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    for d in predictions {
        if !index.contains_key(d.image_id.as_str()) {
            return Err(DetEvalError::UnknownImage(d.image_id.clone()));
        }
        d.check()?;
    }

    let mut per_class = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut aps = Vec::new();
    for (&class_id, label) in ds.class_map() {
        let mut per_image: Vec<Vec<(usize, &Detection)>> = vec![Vec::new(); ds.len()];
        for (i, d) in predictions.iter().enumerate() {
            if d.class_id == class_id {
                per_image[index[d.image_id.as_str()]].push((i, d));
            }
        }
        let (entries, num_gt) = pooled(ds, &per_image, class_id, iou_threshold);
        let flags: Vec<bool> = entries.iter().map(|e| e.is_true_positive).collect();
        let ap = average_precision(&PRCurve::from_ranked(&flags, num_gt));
        let tp = flags.iter().filter(|&&f| f).count();
        match ap {
            Some(v) => aps.push(v),
            None => excluded.push(class_id),
        }
        per_class.insert(
            class_id,
            ClassEval {
                label: label.clone(),
                ap,
                num_gt,
                num_detections: flags.len(),
                true_positives: tp,
                false_positives: flags.len() - tp,
                false_negatives: num_gt - tp,
            },
        );
    }
    let map = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
    Ok(EvalReport { iou_threshold, per_class, map, excluded_classes: excluded })
}

/// Reads a JSON-lines prediction file.
pub fn read_predictions(path: &Path) -> Result<Vec<Detection>, DetEvalError> {
    let io = |source| DetEvalError::Io { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(&line).map_err(|e| DetEvalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        d.check().map_err(|e| DetEvalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(d);
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, dets: &[Detection]) -> Result<(), DetEvalError> {
    let io = |source| DetEvalError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for d in dets {
        let line = serde_json::to_string(d).expect("detection serializes");
        writeln!(f, "{line}").map_err(io)?;
    }
    f.flush().map_err(io)
}
