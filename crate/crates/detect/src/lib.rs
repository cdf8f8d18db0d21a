//! Detector abstraction, two built-in desk-scale detectors, an adapter for
//! external detectors driven over a file-exchange contract, and a
//! throughput harness.

pub mod benchmark;
pub mod external;
pub mod noise;
pub mod tiny;

use std::collections::BTreeMap;
use std::path::PathBuf;

use advaug_core::dataset::{Dataset, DatasetError, ImageRecord};
use advaug_core::deteval::{DetEvalError, Detection};
use advaug_core::exec;
use advaug_core::imaging::ImageError;
use advaug_core::nn::Network;
use serde::{Deserialize, Serialize};

pub use benchmark::{append_perf_csv, measure_throughput, BenchOptions, LatencyStats, PerfRecord};
pub use external::ExternalAdapter;
pub use noise::{noise_oracle_predict, NoiseOracle, NoiseOracleConfig};
pub use tiny::TinyDetector;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("training of '{detector}' diverged: {message}")]
    Diverged { detector: String, message: String },
    #[error("adapter '{name}' failed: {message}")]
    Adapter { name: String, message: String },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] DetEvalError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Square input side in pixels.
    pub image_size: u32,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 300, batch_size: 64, image_size: 512, seed: 0, learning_rate: 1e-3 }
    }
}

impl TrainConfig {
    /// 64 px, 30 epochs, batch 8.
    pub fn desk() -> Self {
        Self { epochs: 30, batch_size: 8, image_size: 64, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if self.batch_size == 0 || self.image_size == 0 || !self.image_size.is_multiple_of(32) {
            return Err(DetectError::Config(format!(
                "batch_size must be positive and image_size a positive multiple of 32 (got {} / {})",
                self.batch_size, self.image_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DetectError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// A trained (or configured) detector instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub detector: String,
    pub config: TrainConfig,
    /// Flat parameters for built-in networks; empty otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    /// Directory holding an external model, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl ModelRef {
    pub fn new(detector: impl Into<String>, config: TrainConfig) -> Self {
        Self { detector: detector.into(), config, params: Vec::new(), path: None, metadata: BTreeMap::new() }
    }
}

/// A decoded, preprocessed input ready for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image_id: String,
    /// CHW pixels in [-1, 1] at the adapter's input size; empty when the
    /// adapter does not look at pixels.
    pub pixels: Vec<f64>,
    pub size: u32,
    /// The source record, for adapters that work from files or labels.
    pub source: Option<ImageRecord>,
}

/// Operations per forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FlopReport {
    /// Layer-walk count over convolution layers.
    Computed(u64),
    /// Value supplied by the detector itself; not verified.
    SelfReported(f64),
    Unavailable,
}

impl FlopReport {
    pub fn value(&self) -> Option<f64> {
        match *self {
            FlopReport::Computed(v) => Some(v as f64),
            FlopReport::SelfReported(v) => Some(v),
            FlopReport::Unavailable => None,
        }
    }
}

impl std::fmt::Display for FlopReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlopReport::Computed(v) => write!(f, "{v}"),
            FlopReport::SelfReported(v) => write!(f, "{v} (self-reported)"),
            FlopReport::Unavailable => f.write_str("n/a"),
        }
    }
}

/// Layer-walk count: `2*k*k*cin*cout*hout*wout` summed over convolutions.
pub fn layer_walk_flops(net: &Network, channels: usize, height: usize, width: usize) -> u64 {
    net.conv_flops(channels, height, width)
}

pub trait DetectorAdapter: Send + Sync {
    fn name(&self) -> &str;

    fn train(&self, ds: &Dataset, cfg: &TrainConfig) -> Result<ModelRef, DetectError>;

    /// Decoding and preprocessing of one record.
    fn prepare(&self, model: &ModelRef, record: &ImageRecord) -> Result<Frame, DetectError>;

    fn infer(&self, model: &ModelRef, frame: &Frame) -> Result<Vec<Detection>, DetectError>;

    /// Detections for every record, in record order.
    fn predict(&self, model: &ModelRef, ds: &Dataset) -> Result<Vec<Detection>, DetectError> {
        let per_image = exec::try_map(ds.records(), |r| {
            let frame = self.prepare(model, r)?;
            self.infer(model, &frame)
        })?;
        Ok(per_image.into_iter().flatten().collect())
    }

    fn flops(&self, _model: &ModelRef) -> FlopReport {
        FlopReport::Unavailable
    }

    fn parameter_count(&self, _model: &ModelRef) -> Option<u64> {
        None
    }
}

/// Operations per forward pass as the adapter reports or computes them.
pub fn flop_report(adapter: &dyn DetectorAdapter, model: &ModelRef) -> FlopReport {
    adapter.flops(model)
}

/// Adapter constructed by name: `noise-oracle` or `tiny`.
pub fn builtin_adapter(name: &str) -> Option<Box<dyn DetectorAdapter>> {
    match name {
        NoiseOracle::NAME => Some(Box::new(NoiseOracle::default())),
        TinyDetector::NAME => Some(Box::new(TinyDetector)),
        _ => None,
    }
}
