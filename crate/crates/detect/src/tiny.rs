//! Small grid-regression detector. Three stride-2 convolutions reduce the
//! input to an `S x S` grid (`S = image_size / 8`); each cell predicts an
//! objectness logit, two class logits, a centre offset and a box size.
//! There are no normalization layers, so the network stays sensitive to
//! global brightness.

use advaug_core::dataset::{BoundingBox, Dataset, ImageRecord};
use advaug_core::deteval::{iou, Detection};
use advaug_core::imaging::{load_rgb, resize_bilinear, to_chw};
use advaug_core::nn::{Adam, Init, LayerSpec, Network, Tensor};
use advaug_core::{exec, seeding};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{DetectError, DetectorAdapter, FlopReport, Frame, ModelRef, TrainConfig};

const OUT: usize = 7;
const STRIDE: u32 = 8;
const LAMBDA_COORD: f64 = 5.0;
const LAMBDA_NOOBJ: f64 = 0.5;
const MIN_SCORE: f64 = 0.005;
const NMS_IOU: f64 = 0.5;

pub fn specs() -> Vec<LayerSpec> {
    let slope = 0.1;
    vec![
        LayerSpec::conv(3, 16, 3, 2, 1, Init::He),
        LayerSpec::LeakyRelu(slope),
        LayerSpec::conv(16, 32, 3, 2, 1, Init::He),
        LayerSpec::LeakyRelu(slope),
        LayerSpec::conv(32, 48, 3, 2, 1, Init::He),
        LayerSpec::LeakyRelu(slope),
        LayerSpec::conv(48, 48, 3, 1, 1, Init::He),
        LayerSpec::LeakyRelu(slope),
        LayerSpec::conv(48, OUT, 1, 1, 0, Init::Normal(0.01)),
    ]
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Target box per grid cell; the larger box wins a shared cell.
fn assign(boxes: &[BoundingBox], grid: usize) -> Vec<Option<BoundingBox>> {
    let mut cells: Vec<Option<BoundingBox>> = vec![None; grid * grid];
    for b in boxes {
        let gx = ((b.cx * grid as f64) as usize).min(grid - 1);
        let gy = ((b.cy * grid as f64) as usize).min(grid - 1);
        let slot = &mut cells[gy * grid + gx];
        if slot.is_none_or(|cur| cur.area() < b.area()) {
            *slot = Some(*b);
        }
    }
    cells
}

/// Loss of one sample and its gradient with respect to the raw outputs.
fn sample_loss(out: &[f64], targets: &[Option<BoundingBox>], grid: usize) -> (f64, Vec<f64>) {
    let plane = grid * grid;
    let mut grad = vec![0.0; out.len()];
    let mut loss = 0.0;
    for (cell, target) in targets.iter().enumerate() {
        let at = |k: usize| out[k * plane + cell];
        let o = at(0);
        match target {
            None => {
                loss += LAMBDA_NOOBJ * softplus(o);
                grad[cell] = LAMBDA_NOOBJ * sigmoid(o);
            }
            Some(b) => {
                loss += softplus(o) - o;
                grad[cell] = sigmoid(o) - 1.0;

                let (c0, c1) = (at(1), at(2));
                let m = c0.max(c1);
                let (e0, e1) = ((c0 - m).exp(), (c1 - m).exp());
                let p = [e0 / (e0 + e1), e1 / (e0 + e1)];
                let k = b.class_id.min(1) as usize;
                loss -= p[k].max(1e-300).ln();
                for j in 0..2 {
                    grad[(1 + j) * plane + cell] = p[j] - if j == k { 1.0 } else { 0.0 };
                }

                let (gx, gy) = ((cell % grid) as f64, (cell / grid) as f64);
                let want = [b.cx * grid as f64 - gx, b.cy * grid as f64 - gy, b.w, b.h];
                for (j, t) in want.iter().enumerate() {
                    let s = sigmoid(at(3 + j));
                    loss += LAMBDA_COORD * (s - t) * (s - t);
                    grad[(3 + j) * plane + cell] = LAMBDA_COORD * 2.0 * (s - t) * s * (1.0 - s);
                }
            }
        }
    }
    (loss, grad)
}

fn decode(out: &[f64], grid: usize, image_id: &str) -> Vec<Detection> {
    let plane = grid * grid;
    let mut dets = Vec::new();
    for cell in 0..plane {
        let at = |k: usize| out[k * plane + cell];
        let obj = sigmoid(at(0));
        let (c0, c1) = (at(1), at(2));
        let p1 = sigmoid(c1 - c0);
        let (class_id, p) = if p1 > 0.5 { (1, p1) } else { (0, 1.0 - p1) };
        let score = obj * p;
        if score < MIN_SCORE {
            continue;
        }
        let (gx, gy) = ((cell % grid) as f64, (cell / grid) as f64);
        let b = BoundingBox::new(
            class_id,
            (gx + sigmoid(at(3))) / grid as f64,
            (gy + sigmoid(at(4))) / grid as f64,
            sigmoid(at(5)).max(1e-4),
            sigmoid(at(6)).max(1e-4),
        );
        dets.push(Detection::new(image_id, b.clamped().0, score.clamp(0.0, 1.0)));
    }
    nms(dets)
}

/// Greedy per-class non-maximum suppression; the output stays sorted by
/// descending confidence.
fn nms(mut dets: Vec<Detection>) -> Vec<Detection> {
    dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<Detection> = Vec::new();
    for d in dets {
        let bd = d.bbox();
        if kept.iter().all(|k| k.class_id != d.class_id || iou(&k.bbox(), &bd) < NMS_IOU) {
            kept.push(d);
        }
    }
    kept
}

fn flip(chw: &[f64], size: usize) -> Vec<f64> {
    let mut out = chw.to_vec();
    for row in out.chunks_mut(size) {
        row.reverse();
    }
    out
}

fn network(model: &ModelRef) -> Result<Network, DetectError> {
    Network::from_params(&specs(), model.params.clone()).ok_or_else(|| DetectError::Adapter {
        name: TinyDetector::NAME.into(),
        message: format!("model has {} parameters, architecture expects a different count", model.params.len()),
    })
}

fn load_input(record: &ImageRecord, size: u32) -> Result<Vec<f64>, DetectError> {
    let img = load_rgb(&record.image_path)?;
    Ok(to_chw(&resize_bilinear(&img, size, size)))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TinyDetector;

impl TinyDetector {
    pub const NAME: &'static str = "tiny";

    /// Freshly initialized model, identical to training for zero epochs.
    pub fn train_untrained(&self, cfg: &TrainConfig) -> ModelRef {
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::mix(cfg.seed, 0x7d));
        let mut model = ModelRef::new(Self::NAME, cfg.clone());
        model.params = Network::new(&specs(), &mut rng).params;
        model
    }
}

impl DetectorAdapter for TinyDetector {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn train(&self, ds: &Dataset, cfg: &TrainConfig) -> Result<ModelRef, DetectError> {
        cfg.validate()?;
        if ds.is_empty() {
            return Err(DetectError::Argument("training set is empty".into()));
        }
        let size = cfg.image_size as usize;
        let grid = (cfg.image_size / STRIDE) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::mix(cfg.seed, 0x7d));
        let mut net = Network::new(&specs(), &mut rng);
        let mut opt = Adam::new(net.param_count(), cfg.learning_rate, 0.9, 0.999);
        let inputs = exec::try_map(ds.records(), |r| load_input(r, cfg.image_size))?;
        let boxes: Vec<&[BoundingBox]> = ds.records().iter().map(|r| r.annotations.as_slice()).collect();

        let mut order: Vec<usize> = (0..ds.len()).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let mut samples = Vec::with_capacity(chunk.len());
                let mut targets = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    if rng.random_bool(0.5) {
                        samples.push(flip(&inputs[i], size));
                        let flipped: Vec<BoundingBox> =
                            boxes[i].iter().map(|b| BoundingBox { cx: 1.0 - b.cx, ..*b }).collect();
                        targets.push(assign(&flipped, grid));
                    } else {
                        samples.push(inputs[i].clone());
                        targets.push(assign(boxes[i], grid));
                    }
                }
                let refs: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
                let x = Tensor::stack(&refs, 3, size, size);
                let (y, tape) = net.forward_train(&x);
                let n = chunk.len() as f64;
                let mut dy = Tensor::zeros(y.n, y.c, y.h, y.w);
                let mut batch_loss = 0.0;
                for (k, t) in targets.iter().enumerate() {
                    let (l, g) = sample_loss(y.sample(k), t, grid);
                    batch_loss += l / n;
                    let len = g.len();
                    dy.data[k * len..(k + 1) * len].iter_mut().zip(g).for_each(|(d, v)| *d = v / n);
                }
                if !batch_loss.is_finite() {
                    return Err(DetectError::Diverged {
                        detector: Self::NAME.into(),
                        message: format!("loss {batch_loss} in epoch {epoch}"),
                    });
                }
                let mut grads = vec![0.0; net.param_count()];
                net.backward(&tape, dy, &mut grads);
                opt.step(&mut net.params, &grads);
                epoch_loss += batch_loss;
            }
            log::debug!("tiny detector epoch {}: loss {epoch_loss:.4}", epoch + 1);
        }
        let mut model = ModelRef::new(Self::NAME, cfg.clone());
        model.params = net.params;
        Ok(model)
    }

    fn prepare(&self, model: &ModelRef, record: &ImageRecord) -> Result<Frame, DetectError> {
        let size = model.config.image_size;
        Ok(Frame { image_id: record.id.clone(), pixels: load_input(record, size)?, size, source: None })
    }

    fn infer(&self, model: &ModelRef, frame: &Frame) -> Result<Vec<Detection>, DetectError> {
        infer_with(&network(model)?, frame)
    }

    fn predict(&self, model: &ModelRef, ds: &Dataset) -> Result<Vec<Detection>, DetectError> {
        let net = network(model)?;
        let per_image = exec::try_map(ds.records(), |r| infer_with(&net, &self.prepare(model, r)?))?;
        Ok(per_image.into_iter().flatten().collect())
    }

    fn flops(&self, model: &ModelRef) -> FlopReport {
        let s = model.config.image_size as usize;
        match network(model) {
            Ok(net) => FlopReport::Computed(net.conv_flops(3, s, s)),
            Err(_) => FlopReport::Unavailable,
        }
    }

    fn parameter_count(&self, model: &ModelRef) -> Option<u64> {
        Some(model.params.len() as u64)
    }
}

fn infer_with(net: &Network, frame: &Frame) -> Result<Vec<Detection>, DetectError> {
    let s = frame.size as usize;
    if frame.pixels.len() != 3 * s * s {
        return Err(DetectError::Argument(format!("frame '{}' has the wrong size", frame.image_id)));
    }
    let y = net.forward(&Tensor::from_vec(1, 3, s, s, frame.pixels.clone()));
    Ok(decode(&y.data, y.h, &frame.image_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_gradient_matches_differences() {
        let grid = 2;
        let out: Vec<f64> = (0..OUT * 4).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect();
        let targets = vec![None, Some(BoundingBox::new(1, 0.7, 0.2, 0.1, 0.3)), None, None];
        let (_, g) = sample_loss(&out, &targets, grid);
        for i in 0..out.len() {
            let h = 1e-6;
            let mut up = out.clone();
            up[i] += h;
            let mut down = out.clone();
            down[i] -= h;
            let num = (sample_loss(&up, &targets, grid).0 - sample_loss(&down, &targets, grid).0) / (2.0 * h);
            assert!((num - g[i]).abs() < 1e-6, "output {i}: {num} vs {}", g[i]);
        }
    }

    #[test]
    fn assignment_keeps_larger_box() {
        let small = BoundingBox::new(0, 0.1, 0.1, 0.05, 0.05);
        let large = BoundingBox::new(1, 0.12, 0.12, 0.1, 0.1);
        let cells = assign(&[small, large], 4);
        assert_eq!(cells[0], Some(large));
        assert_eq!(cells.iter().filter(|c| c.is_some()).count(), 1);
    }

    #[test]
    fn nms_suppresses_same_class_overlaps() {
        let b = BoundingBox::new(0, 0.5, 0.5, 0.2, 0.2);
        let dets = vec![
            Detection::new("a", b, 0.5),
            Detection::new("a", b, 0.9),
            Detection::new("a", BoundingBox { class_id: 1, ..b }, 0.4),
        ];
        let kept = nms(dets);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].confidence, 0.9);
    }

    #[test]
    fn untrained_flops_and_shape() {
        let model = TinyDetector.train_untrained(&TrainConfig::desk());
        let net = network(&model).unwrap();
        assert_eq!(net.output_shape(3, 64, 64), (OUT, 8, 8));
        assert!(matches!(TinyDetector.flops(&model), FlopReport::Computed(v) if v > 0));
    }
}
