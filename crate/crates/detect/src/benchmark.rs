//! Wall-clock throughput of a detector at batch size 1.

use std::fs::OpenOptions;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use advaug_core::dataset::Dataset;
use serde::{Deserialize, Serialize};

use crate::{DetectError, DetectorAdapter, ModelRef};

/// Only one measurement runs at a time so concurrent callers do not skew
/// each other's timings.
static MEASURE_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchOptions {
    pub batch_size: usize,
    pub warmup: usize,
    pub measured_frames: usize,
    /// Time image decoding and preprocessing as part of each frame.
    pub include_preprocess: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { batch_size: 1, warmup: 10, measured_frames: 30, include_preprocess: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfRecord {
    pub detector: String,
    pub fps: f64,
    pub latency_ms: LatencyStats,
    pub image_size: u32,
    pub batch_size: usize,
    pub warmup_count: usize,
    pub measured_frames: usize,
    pub host: String,
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn latency_stats(samples_ms: &[f64]) -> LatencyStats {
    let mut sorted = samples_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    LatencyStats {
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p50: percentile(&sorted, 50.0),
        p95: percentile(&sorted, 95.0),
    }
}

pub fn host_descriptor() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}-{} ({threads} threads)", std::env::consts::OS, std::env::consts::ARCH)
}

/// Runs `warmup` untimed frames, then times `measured_frames` frames one by
/// one, cycling through the dataset as needed. Any adapter error aborts the
/// run and no partial record is returned.
pub fn measure_throughput(
    adapter: &dyn DetectorAdapter,
    model: &ModelRef,
    ds: &Dataset,
    opts: &BenchOptions,
) -> Result<PerfRecord, DetectError> {
    if opts.batch_size != 1 {
        return Err(DetectError::Argument(format!("only batch size 1 is supported (got {})", opts.batch_size)));
    }
    if opts.measured_frames == 0 {
        return Err(DetectError::Argument("measured_frames must be positive".into()));
    }
    if ds.is_empty() {
        return Err(DetectError::Argument("benchmark dataset is empty".into()));
    }
    let _guard = MEASURE_LOCK.lock().unwrap_or_else(|p| p.into_inner());
    let records = ds.records();
    let mut frames = records.iter().cycle();

    for _ in 0..opts.warmup {
        let r = frames.next().expect("cycle is infinite");
        adapter.infer(model, &adapter.prepare(model, r)?)?;
    }

    let mut latencies = Vec::with_capacity(opts.measured_frames);
    let mut elapsed = Duration::ZERO;
    for _ in 0..opts.measured_frames {
        let r = frames.next().expect("cycle is infinite");
        let (frame, start) = if opts.include_preprocess {
            let start = Instant::now();
            (adapter.prepare(model, r)?, start)
        } else {
            (adapter.prepare(model, r)?, Instant::now())
        };
        adapter.infer(model, &frame)?;
        let d = start.elapsed();
        elapsed += d;
        latencies.push(d.as_secs_f64() * 1e3);
    }

    let fps = opts.measured_frames as f64 / elapsed.as_secs_f64().max(1e-9);
    Ok(PerfRecord {
        detector: adapter.name().to_string(),
        fps,
        latency_ms: latency_stats(&latencies),
        image_size: model.config.image_size,
        batch_size: opts.batch_size,
        warmup_count: opts.warmup,
        measured_frames: opts.measured_frames,
        host: host_descriptor(),
    })
}

/// Appends one row, writing the header when the file is new or empty.
pub fn append_perf_csv(path: &Path, rec: &PerfRecord) -> Result<(), DetectError> {
    let io = |source| DetectError::Io { path: path.to_path_buf(), source };
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    let to_io = |e: csv::Error| DetectError::Io { path: path.to_path_buf(), source: e.into() };
    if fresh {
        w.write_record([
            "detector", "fps", "latency_mean_ms", "latency_p50_ms", "latency_p95_ms", "image_size", "batch_size",
            "warmup_count", "measured_frames", "host",
        ])
        .map_err(to_io)?;
    }
    w.write_record([
        rec.detector.clone(),
        format!("{:.3}", rec.fps),
        format!("{:.3}", rec.latency_ms.mean),
        format!("{:.3}", rec.latency_ms.p50),
        format!("{:.3}", rec.latency_ms.p95),
        rec.image_size.to_string(),
        rec.batch_size.to_string(),
        rec.warmup_count.to_string(),
        rec.measured_frames.to_string(),
        rec.host.clone(),
    ])
    .map_err(to_io)?;
    w.flush().map_err(io)
}
