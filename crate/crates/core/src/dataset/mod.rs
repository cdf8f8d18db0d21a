//! Annotated image datasets tagged by weather condition.
//!
//! On disk a dataset is a JSON manifest listing images and their annotation
//! files (see [`manifest`]); annotation files use the one-box-per-line text
//! layout in [`annotation`].

pub mod annotation;
pub mod manifest;
mod model;
mod ops;
mod validate;

use std::path::PathBuf;

use thiserror::Error;

pub use annotation::{format_annotations, parse_annotations};
pub use manifest::{
    dataset_digest, load_manifest, manifest_doc, save_manifest, write_annotation_files, ManifestDoc,
    ManifestImage, MANIFEST_FILE,
};
pub use model::{
    cone_class_map, BoundingBox, BoxViolation, Condition, Dataset, ImageRecord, BLUE_CONE,
    YELLOW_CONE,
};
pub use ops::{merge_datasets, split_dataset, train_count};
pub use validate::{validate_dataset, ValidationReport, Violation, ViolationKind};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("malformed manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("cannot merge datasets: {0}")]
    Merge(String),
}
