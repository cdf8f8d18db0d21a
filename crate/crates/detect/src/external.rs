//! Adapter for detectors that live outside this process.
//!
//! The program is invoked as `program [args..] train <manifest> <job.json>` or
//! `program [args..] predict <manifest> <job.json>`. The job file names the
//! directories and files involved; training must leave a `metadata.json`
//! (`{"flops": .., "params": ..}`, both optional) in `model_dir`, and
//! prediction writes one JSON detection per line to `predictions`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use advaug_core::dataset::{cone_class_map, save_manifest, Condition, Dataset, ImageRecord};
use advaug_core::deteval::{read_predictions, Detection};
use serde::{Deserialize, Serialize};

use crate::{DetectError, DetectorAdapter, FlopReport, Frame, ModelRef, TrainConfig};

pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalAdapter {
    pub name: String,
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    /// Scratch space for manifests, job files and models.
    pub work_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct Job<'a> {
    train: &'a TrainConfig,
    model_dir: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    predictions: Option<&'a Path>,
}

#[derive(Debug, Default, Deserialize)]
struct Metadata {
    flops: Option<f64>,
    params: Option<u64>,
}

impl ExternalAdapter {
    pub fn new(name: impl Into<String>, program: impl Into<PathBuf>, work_dir: impl Into<PathBuf>) -> Self {
        Self { name: name.into(), program: program.into(), args: Vec::new(), work_dir: work_dir.into() }
    }

    fn fail(&self, message: impl Into<String>) -> DetectError {
        DetectError::Adapter { name: self.name.clone(), message: message.into() }
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DetectError + '_ {
        move |source| DetectError::Io { path: path.to_path_buf(), source }
    }

    fn run(&self, verb: &str, manifest: &Path, job: &Path) -> Result<(), DetectError> {
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(verb)
            .arg(manifest)
            .arg(job)
            .output()
            .map_err(|e| self.fail(format!("cannot start {}: {e}", self.program.display())))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(self.fail(format!("{verb} exited with {}: {}", out.status, stderr.trim())));
        }
        Ok(())
    }

    fn stage(&self, ds: &Dataset, tag: &str) -> Result<PathBuf, DetectError> {
        let dir = self.work_dir.join(format!("{tag}-{}", ds.name()));
        fs::create_dir_all(&dir).map_err(Self::io(&dir))?;
        Ok(save_manifest(ds, &dir)?)
    }

    fn write_job(&self, path: &Path, job: &Job) -> Result<(), DetectError> {
        let text = serde_json::to_string_pretty(job).map_err(|e| self.fail(e.to_string()))?;
        fs::write(path, text).map_err(Self::io(path))
    }

    fn model_dir<'m>(&self, model: &'m ModelRef) -> Result<&'m Path, DetectError> {
        model.path.as_deref().ok_or_else(|| self.fail("model has no directory"))
    }

    fn metadata(&self, model: &ModelRef) -> Metadata {
        let Some(dir) = model.path.as_deref() else { return Metadata::default() };
        fs::read_to_string(dir.join(METADATA_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }
}

impl DetectorAdapter for ExternalAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn train(&self, ds: &Dataset, cfg: &TrainConfig) -> Result<ModelRef, DetectError> {
        let manifest = self.stage(ds, "train")?;
        let model_dir = self.work_dir.join(format!("model-{}-{}", ds.name(), cfg.seed));
        fs::create_dir_all(&model_dir).map_err(Self::io(&model_dir))?;
        let job_path = model_dir.join("train_job.json");
        self.write_job(&job_path, &Job { train: cfg, model_dir: &model_dir, predictions: None })?;
        self.run("train", &manifest, &job_path)?;
        let mut model = ModelRef::new(self.name.clone(), cfg.clone());
        model.path = Some(model_dir);
        Ok(model)
    }

    fn prepare(&self, _model: &ModelRef, record: &ImageRecord) -> Result<Frame, DetectError> {
        Ok(Frame { image_id: record.id.clone(), pixels: Vec::new(), size: 0, source: Some(record.clone()) })
    }

    /// Runs the program on a one-image dataset, so timings include process
    /// start-up.
    fn infer(&self, model: &ModelRef, frame: &Frame) -> Result<Vec<Detection>, DetectError> {
        let record = frame.source.clone().ok_or_else(|| self.fail("frame carries no source record"))?;
        let single = Dataset::new(
            format!("frame-{}", record.id),
            Condition::Sunny,
            cone_class_map(),
            vec![record],
        )?;
        self.predict(model, &single)
    }

    fn predict(&self, model: &ModelRef, ds: &Dataset) -> Result<Vec<Detection>, DetectError> {
        let model_dir = self.model_dir(model)?;
        let manifest = self.stage(ds, "predict")?;
        let predictions = manifest.with_file_name("predictions.jsonl");
        let job_path = manifest.with_file_name("predict_job.json");
        self.write_job(&job_path, &Job { train: &model.config, model_dir, predictions: Some(&predictions) })?;
        if predictions.exists() {
            fs::remove_file(&predictions).map_err(Self::io(&predictions))?;
        }
        self.run("predict", &manifest, &job_path)?;
        let dets = read_predictions(&predictions)?;
        if let Some(d) = dets.iter().find(|d| ds.record(&d.image_id).is_none()) {
            return Err(self.fail(format!("prediction for unknown image '{}'", d.image_id)));
        }
        Ok(dets)
    }

    fn flops(&self, model: &ModelRef) -> FlopReport {
        self.metadata(model).flops.map_or(FlopReport::Unavailable, FlopReport::SelfReported)
    }

    fn parameter_count(&self, model: &ModelRef) -> Option<u64> {
        self.metadata(model).params
    }
}
