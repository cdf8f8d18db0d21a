//! Ground-truth-derived detector with controllable misses, jitter and false
//! positives.

use advaug_core::dataset::{BoundingBox, Dataset, ImageRecord};
use advaug_core::deteval::Detection;
use advaug_core::seeding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::{DetectError, DetectorAdapter, Frame, ModelRef, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseOracleConfig {
    /// Probability of dropping each ground-truth box.
    pub fn_rate: f64,
    /// Expected number of false positives per image (Poisson mean).
    pub fp_rate: f64,
    /// Standard deviation of the Gaussian added to each box coordinate.
    pub jitter_sigma: f64,
    pub tp_confidence_mean: f64,
    pub fp_confidence_mean: f64,
    pub confidence_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseOracleConfig {
    fn default() -> Self {
        Self {
            fn_rate: 0.2,
            fp_rate: 0.2,
            jitter_sigma: 0.01,
            tp_confidence_mean: 0.8,
            fp_confidence_mean: 0.4,
            confidence_sigma: 0.1,
            seed: 0,
        }
    }
}

impl NoiseOracleConfig {
    pub fn exact() -> Self {
        Self { fn_rate: 0.0, fp_rate: 0.0, jitter_sigma: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if !(0.0..=1.0).contains(&self.fn_rate) {
            return Err(DetectError::Config("fn_rate must lie in [0, 1]".into()));
        }
        if !(self.fp_rate >= 0.0 && self.fp_rate.is_finite()) {
            return Err(DetectError::Config("fp_rate must be a non-negative number".into()));
        }
        if !(self.jitter_sigma >= 0.0 && self.confidence_sigma >= 0.0) {
            return Err(DetectError::Config("sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

fn confidence(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    let v = if sigma > 0.0 { Normal::new(mean, sigma).expect("valid sigma").sample(rng) } else { mean };
    v.clamp(0.0, 1.0)
}

fn jitter(rng: &mut ChaCha8Rng, b: &BoundingBox, sigma: f64) -> BoundingBox {
    if sigma == 0.0 {
        return *b;
    }
    let n = Normal::new(0.0, sigma).expect("valid sigma");
    let moved = BoundingBox::new(
        b.class_id,
        (b.cx + n.sample(rng)).clamp(0.0, 1.0),
        (b.cy + n.sample(rng)).clamp(0.0, 1.0),
        (b.w + n.sample(rng)).clamp(1e-3, 1.0),
        (b.h + n.sample(rng)).clamp(1e-3, 1.0),
    );
    moved.clamped().0
}

/// Detections for one image. The generator is seeded from `(seed, image_id)`
/// so results do not depend on record order or scheduling.
pub fn oracle_image(cfg: &NoiseOracleConfig, seed: u64, image_id: &str, gts: &[BoundingBox]) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, &["noise-oracle", image_id]));
    let mut out = Vec::new();
    for b in gts {
        if rng.random_bool(cfg.fn_rate) {
            continue;
        }
        let bx = jitter(&mut rng, b, cfg.jitter_sigma);
        let c = confidence(&mut rng, cfg.tp_confidence_mean, cfg.confidence_sigma);
        out.push(Detection::new(image_id, bx, c));
    }
    let n_fp = if cfg.fp_rate > 0.0 { Poisson::new(cfg.fp_rate).expect("positive rate").sample(&mut rng) as usize } else { 0 };
    for _ in 0..n_fp {
        let w = rng.random_range(0.03..0.15);
        let h = rng.random_range(0.05..0.2);
        let cx = rng.random_range(w / 2.0..1.0 - w / 2.0);
        let cy = rng.random_range(h / 2.0..1.0 - h / 2.0);
        let class_id = rng.random_range(0..2);
        let c = confidence(&mut rng, cfg.fp_confidence_mean, cfg.confidence_sigma);
        out.push(Detection::new(image_id, BoundingBox::new(class_id, cx, cy, w, h), c));
    }
    out
}

/// Noisy copy of the ground truth of every record.
pub fn noise_oracle_predict(cfg: &NoiseOracleConfig, ds: &Dataset) -> Vec<Detection> {
    ds.records().iter().flat_map(|r| oracle_image(cfg, cfg.seed, &r.id, &r.annotations)).collect()
}

/// Adapter wrapper; `train` only records the seed.
#[derive(Debug, Clone, Default)]
pub struct NoiseOracle {
    pub config: NoiseOracleConfig,
}

impl NoiseOracle {
    pub const NAME: &'static str = "noise-oracle";
}

impl DetectorAdapter for NoiseOracle {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn train(&self, ds: &Dataset, cfg: &TrainConfig) -> Result<ModelRef, DetectError> {
        self.config.validate()?;
        if ds.is_empty() {
            return Err(DetectError::Argument("training set is empty".into()));
        }
        Ok(ModelRef::new(Self::NAME, cfg.clone()))
    }

    fn prepare(&self, _model: &ModelRef, record: &ImageRecord) -> Result<Frame, DetectError> {
        Ok(Frame { image_id: record.id.clone(), pixels: Vec::new(), size: 0, source: Some(record.clone()) })
    }

    fn infer(&self, model: &ModelRef, frame: &Frame) -> Result<Vec<Detection>, DetectError> {
        let seed = seeding::mix(self.config.seed, model.config.seed);
        let gts = frame.source.as_ref().map_or(&[][..], |r| r.annotations.as_slice());
        Ok(oracle_image(&self.config, seed, &frame.image_id, gts))
    }
}
