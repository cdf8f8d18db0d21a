use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BoxViolation, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    ZeroArea,
    OutOfRange,
    UnknownClass,
    MissingImage,
    MissingAnnotations,
    InvalidDimensions,
    DuplicateId,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::ZeroArea => "zero-area",
            ViolationKind::OutOfRange => "out-of-range",
            ViolationKind::UnknownClass => "unknown-class",
            ViolationKind::MissingImage => "missing-image",
            ViolationKind::MissingAnnotations => "missing-annotations",
            ViolationKind::InvalidDimensions => "invalid-dimensions",
            ViolationKind::DuplicateId => "duplicate-id",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub record_id: String,
    pub kind: ViolationKind,
    /// Index of the offending box, when the violation is box-level.
    pub box_index: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every invariant violation in `ds`. Never fails; problems are data.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for r in ds.records() {
        let mut push = |kind, box_index| {
            violations.push(Violation { record_id: r.id.clone(), kind, box_index })
        };
        if !seen.insert(r.id.as_str()) {
            push(ViolationKind::DuplicateId, None);
        }
        if r.width == 0 || r.height == 0 {
            push(ViolationKind::InvalidDimensions, None);
        }
        if !r.image_path.is_file() {
            push(ViolationKind::MissingImage, None);
        }
        if !r.annotations_path.is_file() {
            push(ViolationKind::MissingAnnotations, None);
        }
        for (i, b) in r.annotations.iter().enumerate() {
            if !ds.class_map().contains_key(&b.class_id) {
                push(ViolationKind::UnknownClass, Some(i));
            }
            match b.check() {
                Ok(()) => {}
                Err(BoxViolation::ZeroArea) => push(ViolationKind::ZeroArea, Some(i)),
                Err(BoxViolation::OutOfRange) => push(ViolationKind::OutOfRange, Some(i)),
            }
        }
    }
    ValidationReport { violations }
}
