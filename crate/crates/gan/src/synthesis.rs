//! Materializes a style-transferred copy of a sunny dataset. Geometry is
//! untouched, so annotation files are copied byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use advaug_core::dataset::{
    dataset_digest, load_manifest, save_manifest, validate_dataset, Condition, Dataset, ImageRecord,
};
use advaug_core::exec;
use advaug_core::imaging::{from_chw, load_rgb, resize_bilinear, save_png};
use serde::{Deserialize, Serialize};

use crate::generate::{Direction, Translator};
use crate::GanError;

pub const PROVENANCE_FILE: &str = "provenance.json";

/// How source images are brought to and from the model resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizePolicy {
    /// Bilinear down to model resolution, bilinear back to source size.
    Bilinear,
    /// Every source image must already be at model resolution.
    RequireExact,
}

impl ResizePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ResizePolicy::Bilinear => "bilinear",
            ResizePolicy::RequireExact => "require_exact",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisJob {
    pub checkpoint: PathBuf,
    pub direction: Direction,
    pub source: Dataset,
    pub target_condition: Condition,
    pub output_root: PathBuf,
    pub name: String,
    pub resize: ResizePolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub checkpoint_id: String,
    pub checkpoint_path: String,
    pub direction: Direction,
    pub resize_policy: ResizePolicy,
    pub source_name: String,
    pub source_manifest_hash: String,
    pub target_condition: Condition,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GanError + '_ {
    move |source| GanError::Io { path: path.to_path_buf(), source }
}

fn checkpoint_id(dir: &Path) -> Result<String, GanError> {
    let p = dir.join(crate::checkpoint::STATE_FILE);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| GanError::Checkpoint { path: p.clone(), message: e.to_string() })?;
    Ok(v["id"].as_str().unwrap_or_default().to_string())
}

fn check_job(job: &SynthesisJob, translator: &Translator) -> Result<(), GanError> {
    if job.source.condition() != Condition::Sunny {
        return Err(GanError::Config(format!(
            "source '{}' has condition {}, expected sunny",
            job.source.name(),
            job.source.condition()
        )));
    }
    if !matches!(job.target_condition, Condition::FakeNight | Condition::FakeDroplet) {
        return Err(GanError::Config(format!("target condition {} is not synthetic", job.target_condition)));
    }
    let report = validate_dataset(&job.source);
    if !report.is_clean() {
        return Err(GanError::Config(format!(
            "source '{}' fails validation with {} violation(s)",
            job.source.name(),
            report.violations.len()
        )));
    }
    if job.resize == ResizePolicy::RequireExact {
        let r = translator.resolution();
        if let Some(rec) = job.source.records().iter().find(|rec| rec.width != r || rec.height != r) {
            return Err(GanError::Config(format!(
                "record '{}' is {}x{} but the model runs at {r}x{r} and resizing is disabled",
                rec.id, rec.width, rec.height
            )));
        }
    }
    Ok(())
}

fn synthesize_record(translator: &Translator, rec: &ImageRecord, dir: &Path) -> Result<ImageRecord, GanError> {
    let img = load_rgb(&rec.image_path)?;
    let r = translator.resolution();
    let out = from_chw(&translator.translate(&img).data, r, r);
    let out = resize_bilinear(&out, img.width(), img.height());
    let image_path = dir.join("images").join(format!("{}.png", rec.id));
    save_png(&out, &image_path)?;
    let annotations_path = dir.join("labels").join(format!("{}.txt", rec.id));
    fs::copy(&rec.annotations_path, &annotations_path).map_err(io_err(&rec.annotations_path))?;
    Ok(ImageRecord {
        id: rec.id.clone(),
        image_path,
        annotations_path,
        width: img.width(),
        height: img.height(),
        annotations: rec.annotations.clone(),
    })
}

fn write_into(job: &SynthesisJob, translator: &Translator, tmp: &Path) -> Result<(), GanError> {
    fs::create_dir_all(tmp.join("images")).map_err(io_err(tmp))?;
    fs::create_dir_all(tmp.join("labels")).map_err(io_err(tmp))?;
    let records = exec::try_map(job.source.records(), |rec| synthesize_record(translator, rec, tmp))?;
    let provenance = Provenance {
        checkpoint_id: checkpoint_id(&job.checkpoint)?,
        checkpoint_path: job.checkpoint.to_string_lossy().into_owned(),
        direction: job.direction,
        resize_policy: job.resize,
        source_name: job.source.name().to_string(),
        source_manifest_hash: dataset_digest(&job.source)?,
        target_condition: job.target_condition,
    };
    let mut meta = BTreeMap::new();
    meta.insert("resize_policy".to_string(), job.resize.as_str().to_string());
    meta.insert("checkpoint_id".to_string(), provenance.checkpoint_id.clone());
    meta.insert("direction".to_string(), job.direction.to_string());
    meta.insert("source".to_string(), job.source.name().to_string());
    let ds = Dataset::new(&job.name, job.target_condition, job.source.class_map().clone(), records)?
        .with_metadata(meta);
    save_manifest(&ds, tmp)?;
    let p = tmp.join(PROVENANCE_FILE);
    fs::write(&p, serde_json::to_string_pretty(&provenance).expect("provenance serializes")).map_err(io_err(&p))
}

/// Runs a synthesis job. Output is assembled in a temporary sibling directory
/// and moved into place only when complete.
pub fn synthesize_dataset(job: &SynthesisJob) -> Result<Dataset, GanError> {
    let translator = Translator::load(&job.checkpoint, job.direction)?;
    check_job(job, &translator)?;
    let root = &job.output_root;
    let name = root.file_name().ok_or_else(|| GanError::Config("output root has no file name".into()))?;
    if let Some(parent) = root.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = root.with_file_name(format!(".{}.partial", name.to_string_lossy()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
    }
    if let Err(e) = write_into(job, &translator, &tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if root.exists() {
        fs::remove_dir_all(root).map_err(io_err(root))?;
    }
    fs::rename(&tmp, root).map_err(io_err(root))?;
    Ok(load_manifest(&root.join(advaug_core::dataset::MANIFEST_FILE))?)
}

/// Outcome of comparing a synthesized dataset's labels against its source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReport {
    pub preserved: bool,
    /// Set when the record counts differ.
    pub count_mismatch: Option<(usize, usize)>,
    /// Positions where ids do not correspond.
    pub id_mismatches: Vec<String>,
    /// Records whose annotation files differ (or could not be read).
    pub differing: Vec<String>,
}

/// True iff ids correspond one to one and every annotation file pair is
/// byte-identical.
pub fn verify_label_preservation(source: &Dataset, synthesized: &Dataset) -> LabelReport {
    let mut report = LabelReport::default();
    if source.len() != synthesized.len() {
        report.count_mismatch = Some((source.len(), synthesized.len()));
        return report;
    }
    for (a, b) in source.records().iter().zip(synthesized.records()) {
        if a.id != b.id {
            report.id_mismatches.push(format!("{} != {}", a.id, b.id));
            continue;
        }
        match (fs::read(&a.annotations_path), fs::read(&b.annotations_path)) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => report.differing.push(a.id.clone()),
        }
    }
    report.preserved = report.id_mismatches.is_empty() && report.differing.is_empty();
    report
}
