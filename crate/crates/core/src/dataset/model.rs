use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Class id of a blue cone.
pub const BLUE_CONE: u32 = 0;
/// Class id of a yellow cone.
pub const YELLOW_CONE: u32 = 1;

/// The two-class cone map used throughout the pipeline.
pub fn cone_class_map() -> BTreeMap<u32, String> {
    BTreeMap::from([
        (BLUE_CONE, "blue_cone".to_string()),
        (YELLOW_CONE, "yellow_cone".to_string()),
    ])
}

/// Weather/illumination condition a dataset was captured (or synthesized) under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Sunny,
    RealNight,
    RealDroplet,
    FakeNight,
    FakeDroplet,
    Mixed,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Sunny => "sunny",
            Condition::RealNight => "real_night",
            Condition::RealDroplet => "real_droplet",
            Condition::FakeNight => "fake_night",
            Condition::FakeDroplet => "fake_droplet",
            Condition::Mixed => "mixed",
        }
    }

    pub fn is_fake(self) -> bool {
        matches!(self, Condition::FakeNight | Condition::FakeDroplet)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "sunny" => Condition::Sunny,
            "real_night" => Condition::RealNight,
            "real_droplet" => Condition::RealDroplet,
            "fake_night" => Condition::FakeNight,
            "fake_droplet" => Condition::FakeDroplet,
            "mixed" => Condition::Mixed,
            other => {
                return Err(DatasetError::Argument(format!("unknown condition '{other}'")));
            }
        })
    }
}

/// Axis-aligned box in normalized center/size form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(class_id: u32, cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { class_id, cx, cy, w, h }
    }

    /// Builds a box from normalized corner coordinates.
    pub fn from_corners(class_id: u32, x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            class_id,
            cx: (x1 + x2) / 2.0,
            cy: (y1 + y2) / 2.0,
            w: x2 - x1,
            h: y2 - y1,
        }
    }

    /// `(x1, y1, x2, y2)` in normalized coordinates.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Clips the box extent to the unit square. Returns the clipped box and
    /// whether anything changed.
    pub fn clamped(&self) -> (BoundingBox, bool) {
        let (x1, y1, x2, y2) = self.corners();
        if x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0 {
            return (*self, false);
        }
        let (cx1, cy1) = (x1.clamp(0.0, 1.0), y1.clamp(0.0, 1.0));
        let (cx2, cy2) = (x2.clamp(0.0, 1.0), y2.clamp(0.0, 1.0));
        (BoundingBox::from_corners(self.class_id, cx1, cy1, cx2, cy2), true)
    }

    /// Checks the value-range invariants; the first violation is returned.
    pub fn check(&self) -> Result<(), BoxViolation> {
        let finite = [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite {
            return Err(BoxViolation::OutOfRange);
        }
        if self.w == 0.0 || self.h == 0.0 {
            return Err(BoxViolation::ZeroArea);
        }
        if !(0.0..=1.0).contains(&self.cx)
            || !(0.0..=1.0).contains(&self.cy)
            || self.w < 0.0
            || self.h < 0.0
            || self.w > 1.0
            || self.h > 1.0
        {
            return Err(BoxViolation::OutOfRange);
        }
        let (x1, y1, x2, y2) = self.corners();
        // Tolerate the rounding left over from 6-decimal serialization.
        let eps = 1e-6;
        if x1 < -eps || y1 < -eps || x2 > 1.0 + eps || y2 > 1.0 + eps {
            return Err(BoxViolation::OutOfRange);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxViolation {
    ZeroArea,
    OutOfRange,
}

/// One annotated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    /// Resolved path of the image file.
    pub image_path: PathBuf,
    /// Resolved path of the annotation text file.
    pub annotations_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<BoundingBox>,
}

/// Immutable collection of annotated images sharing a condition and class map.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    condition: Condition,
    class_map: BTreeMap<u32, String>,
    records: Vec<ImageRecord>,
    metadata: BTreeMap<String, String>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate record ids.
    pub fn new(
        name: impl Into<String>,
        condition: Condition,
        class_map: BTreeMap<u32, String>,
        records: Vec<ImageRecord>,
    ) -> Result<Self, DatasetError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(DatasetError::Validation(format!("duplicate record id '{}'", r.id)));
            }
        }
        Ok(Self {
            name: name.into(),
            condition,
            class_map,
            records,
            metadata: BTreeMap::new(),
        })
    }

    /// Returns a copy carrying extra provenance key/value pairs.
    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn class_map(&self) -> &BTreeMap<u32, String> {
        &self.class_map
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn box_count(&self) -> usize {
        self.records.iter().map(|r| r.annotations.len()).sum()
    }

    pub fn record(&self, id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Same records under a different name.
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}
