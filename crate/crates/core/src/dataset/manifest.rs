//! JSON dataset manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::annotation::{format_annotations, parse_annotations};
use super::{Condition, Dataset, DatasetError, ImageRecord};

/// File name used when a manifest is written into a dataset directory.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestDoc {
    pub name: String,
    pub condition: Condition,
    pub class_map: BTreeMap<String, String>,
    pub images: Vec<ManifestImage>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestImage {
    pub id: String,
    pub path: String,
    pub width: u32,
    pub height: u32,
    pub annotations_path: String,
}

/// Loads and validates a manifest. Relative paths are resolved against the
/// manifest's directory; out-of-image boxes are clipped with a warning.
pub fn load_manifest(path: &Path) -> Result<Dataset, DatasetError> {
    let text = read_text(path)?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut class_map = BTreeMap::new();
    for (k, v) in &doc.class_map {
        let id: u32 = k.parse().map_err(|_| DatasetError::Manifest {
            path: path.to_path_buf(),
            message: format!("class_map key '{k}' is not an integer"),
        })?;
        class_map.insert(id, v.clone());
    }

    let mut records = Vec::with_capacity(doc.images.len());
    for img in &doc.images {
        let image_path = base.join(&img.path);
        let annotations_path = base.join(&img.annotations_path);
        if !image_path.is_file() {
            return Err(DatasetError::MissingFile { path: image_path });
        }
        if img.width == 0 || img.height == 0 {
            return Err(DatasetError::Validation(format!(
                "record '{}' has zero width or height",
                img.id
            )));
        }
        let ann_text = read_text(&annotations_path)?;
        let mut annotations = parse_annotations(&ann_text, &annotations_path)?;
        for b in annotations.iter_mut() {
            if !class_map.contains_key(&b.class_id) {
                return Err(DatasetError::Validation(format!(
                    "{}: class id {} is not in the class map",
                    annotations_path.display(),
                    b.class_id
                )));
            }
            let (clamped, changed) = b.clamped();
            if changed {
                log::warn!(
                    "{}: box clipped to image bounds ({:?} -> {:?})",
                    annotations_path.display(),
                    b,
                    clamped
                );
                *b = clamped;
            }
            if let Err(kind) = b.check() {
                return Err(DatasetError::Validation(format!(
                    "{}: invalid box {:?} ({kind:?})",
                    annotations_path.display(),
                    b
                )));
            }
        }
        records.push(ImageRecord {
            id: img.id.clone(),
            image_path,
            annotations_path,
            width: img.width,
            height: img.height,
            annotations,
        });
    }

    Ok(Dataset::new(doc.name, doc.condition, class_map, records)?.with_metadata(doc.metadata))
}

/// Builds the manifest document for `ds`, expressing paths relative to `dir`
/// whenever they live below it.
pub fn manifest_doc(ds: &Dataset, dir: &Path) -> ManifestDoc {
    ManifestDoc {
        name: ds.name().to_string(),
        condition: ds.condition(),
        class_map: ds
            .class_map()
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
        images: ds
            .records()
            .iter()
            .map(|r| ManifestImage {
                id: r.id.clone(),
                path: relative_to(&r.image_path, dir),
                width: r.width,
                height: r.height,
                annotations_path: relative_to(&r.annotations_path, dir),
            })
            .collect(),
        metadata: ds.metadata().clone(),
    }
}

/// Writes `manifest.json` into `dir` (which must exist). Annotation and image
/// files are not touched.
pub fn save_manifest(ds: &Dataset, dir: &Path) -> Result<PathBuf, DatasetError> {
    let doc = manifest_doc(ds, dir);
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|source| DatasetError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes every record's annotations to its `annotations_path`.
pub fn write_annotation_files(ds: &Dataset) -> Result<(), DatasetError> {
    for r in ds.records() {
        if let Some(parent) = r.annotations_path.parent() {
            fs::create_dir_all(parent)
                .map_err(|source| DatasetError::Io { path: parent.to_path_buf(), source })?;
        }
        fs::write(&r.annotations_path, format_annotations(&r.annotations)).map_err(|source| {
            DatasetError::Io { path: r.annotations_path.clone(), source }
        })?;
    }
    Ok(())
}

/// Content hash over ids, annotation bytes and image bytes, in record order.
pub fn dataset_digest(ds: &Dataset) -> Result<String, DatasetError> {
    let mut hasher = Sha256::new();
    hasher.update(ds.condition().as_str().as_bytes());
    for (k, v) in ds.class_map() {
        hasher.update(format!("{k}={v};").as_bytes());
    }
    for r in ds.records() {
        hasher.update(r.id.as_bytes());
        hasher.update([0u8]);
        hasher.update(format_annotations(&r.annotations).as_bytes());
        let bytes = fs::read(&r.image_path)
            .map_err(|source| DatasetError::Io { path: r.image_path.clone(), source })?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(DatasetError::MissingFile { path: path.to_path_buf() })
        }
        Err(source) => Err(DatasetError::Io { path: path.to_path_buf(), source }),
    }
}

fn relative_to(path: &Path, dir: &Path) -> String {
    let rel = path
        .strip_prefix(dir)
        .ok()
        .filter(|p| !p.components().any(|c| matches!(c, Component::ParentDir)));
    match rel {
        Some(p) => p.to_string_lossy().replace('\\', "/"),
        None => std::path::absolute(path)
            .unwrap_or_else(|_| path.to_path_buf())
            .to_string_lossy()
            .into_owned(),
    }
}
