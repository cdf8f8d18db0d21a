//! Exact-arithmetic reference for detection mAP on small random instances.
//! Box coordinates sit on a 1/32 grid so every f64 IoU comparison against
//! the 0.5 threshold is decided exactly.

use std::cmp::Ordering;

use advaug_core::dataset::{cone_class_map, BoundingBox, Condition, Dataset, ImageRecord};
use advaug_core::deteval::Detection;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

pub struct Instance {
    pub gts: Vec<Vec<BoundingBox>>,
    pub dets: Vec<Detection>,
}

const GRID: i64 = 32;

fn grid_box<R: Rng>(rng: &mut R, class_id: u32) -> BoundingBox {
    let w = rng.random_range(2..=12);
    let h = rng.random_range(2..=12);
    let x1 = rng.random_range(0..=GRID - w);
    let y1 = rng.random_range(0..=GRID - h);
    let g = GRID as f64;
    BoundingBox::from_corners(class_id, x1 as f64 / g, y1 as f64 / g, (x1 + w) as f64 / g, (y1 + h) as f64 / g)
}

fn nudge<R: Rng>(rng: &mut R, b: &BoundingBox) -> BoundingBox {
    let (x1, y1, x2, y2) = b.corners();
    let g = GRID as f64;
    let mut step = |v: f64| ((v * g).round() as i64 + rng.random_range(-1..=1)).clamp(0, GRID) as f64 / g;
    let (nx1, ny1, nx2, ny2) = (step(x1), step(y1), step(x2), step(y2));
    if nx2 - nx1 < 1.0 / g || ny2 - ny1 < 1.0 / g {
        return *b;
    }
    BoundingBox::from_corners(b.class_id, nx1, ny1, nx2, ny2)
}

/// 1 to 4 images, at most 5 ground-truth boxes per class per image, a mix of
/// near-duplicates, exact copies and random boxes as detections, and
/// confidences on a coarse grid so ties occur.
pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let images = rng.random_range(1..=4);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for img in 0..images {
        let mut boxes = Vec::new();
        for class_id in 0..2u32 {
            for _ in 0..rng.random_range(0..=5) {
                boxes.push(grid_box(rng, class_id));
            }
        }
        for b in &boxes {
            for _ in 0..rng.random_range(0..=2) {
                let d = if rng.random_bool(0.3) { *b } else { nudge(rng, b) };
                dets.push(Detection::new(format!("im{img}"), d, rng.random_range(0..=16) as f64 / 16.0));
            }
        }
        for _ in 0..rng.random_range(0..=3) {
            let class_id = rng.random_range(0..2);
            let b = grid_box(rng, class_id);
            dets.push(Detection::new(format!("im{img}"), b, rng.random_range(0..=16) as f64 / 16.0));
        }
        gts.push(boxes);
    }
    Instance { gts, dets }
}

pub fn dataset(inst: &Instance) -> Dataset {
    let records = inst
        .gts
        .iter()
        .enumerate()
        .map(|(i, boxes)| ImageRecord {
            id: format!("im{i}"),
            image_path: format!("im{i}.png").into(),
            annotations_path: format!("im{i}.txt").into(),
            width: 32,
            height: 32,
            annotations: boxes.clone(),
        })
        .collect();
    Dataset::new("oracle", Condition::Sunny, cone_class_map(), records).unwrap()
}

fn q(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite")
}

fn exact_iou(a: &BoundingBox, b: &BoundingBox) -> BigRational {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = q(ax2.min(bx2)) - q(ax1.max(bx1));
    let ih = q(ay2.min(by2)) - q(ay1.max(by1));
    if iw <= BigRational::zero() || ih <= BigRational::zero() {
        return BigRational::zero();
    }
    let inter = iw * ih;
    let area = |x1: f64, y1: f64, x2: f64, y2: f64| (q(x2) - q(x1)) * (q(y2) - q(y1));
    let union = area(ax1, ay1, ax2, ay2) + area(bx1, by1, bx2, by2) - &inter;
    inter / union
}

/// Exact AP per class (None without ground truth) and their mean.
pub fn oracle_map(inst: &Instance) -> (Vec<Option<BigRational>>, BigRational) {
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let mut per_class = Vec::new();
    for class_id in 0..2u32 {
        let gts: Vec<Vec<&BoundingBox>> =
            inst.gts.iter().map(|bs| bs.iter().filter(|b| b.class_id == class_id).collect()).collect();
        let num_gt: usize = gts.iter().map(Vec::len).sum();
        if num_gt == 0 {
            per_class.push(None);
            continue;
        }
        // (image, iou row, best iou, confidence, input index)
        let mut ranked: Vec<(usize, Vec<BigRational>, BigRational, f64, usize)> = inst
            .dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_id == class_id)
            .map(|(i, d)| {
                let img: usize = d.image_id[2..].parse().unwrap();
                let ious: Vec<BigRational> = gts[img].iter().map(|g| exact_iou(&d.bbox(), g)).collect();
                let best = ious.iter().cloned().fold(BigRational::zero(), |a, b| if b > a { b } else { a });
                (img, ious, best, d.confidence, i)
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.3.partial_cmp(&a.3).unwrap().then_with(|| b.2.cmp(&a.2)).then_with(|| a.4.cmp(&b.4))
        });
        let mut taken: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
        let mut flags = Vec::new();
        for (img, ious, _, _, _) in &ranked {
            let mut choice: Option<usize> = None;
            for (g, v) in ious.iter().enumerate() {
                if taken[*img][g] || *v < half {
                    continue;
                }
                if choice.is_none_or(|c| v.cmp(&ious[c]) == Ordering::Greater) {
                    choice = Some(g);
                }
            }
            if let Some(g) = choice {
                taken[*img][g] = true;
            }
            flags.push(choice.is_some());
        }
        let n_gt = BigRational::from_integer(BigInt::from(num_gt));
        let mut tp = 0usize;
        let mut prec = Vec::new();
        let mut rec = Vec::new();
        for (i, f) in flags.iter().enumerate() {
            tp += usize::from(*f);
            prec.push(BigRational::new(BigInt::from(tp), BigInt::from(i + 1)));
            rec.push(BigRational::from_integer(BigInt::from(tp)) / &n_gt);
        }
        let mut ap = BigRational::zero();
        let mut prev = BigRational::zero();
        for i in 0..flags.len() {
            let env = prec[i..].iter().max().unwrap().clone();
            if rec[i] > prev {
                ap += (&rec[i] - &prev) * env;
            }
            prev = rec[i].clone();
        }
        assert!(ap <= BigRational::one());
        per_class.push(Some(ap));
    }
    let present: Vec<&BigRational> = per_class.iter().flatten().collect();
    let map = if present.is_empty() {
        BigRational::zero()
    } else {
        present.iter().fold(BigRational::zero(), |a, b| a + *b) / BigRational::from_integer(BigInt::from(present.len()))
    };
    (per_class, map)
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("representable")
}
