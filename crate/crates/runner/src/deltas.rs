use serde::{Deserialize, Serialize};

use crate::matrix::ResultsTable;
use crate::RunnerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub detector: String,
    pub training_set: String,
    pub test_set: String,
    pub baseline_map: f64,
    pub augmented_map: f64,
    /// `100 * augmented - 100 * baseline`.
    pub delta_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMean {
    pub training_set: String,
    pub test_set: String,
    pub mean_pp: f64,
    /// Detectors averaged over.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub baseline: String,
    pub excluded: Vec<String>,
    pub cells: Vec<DeltaCell>,
    pub means: Vec<DeltaMean>,
}

impl DeltaTable {
    pub fn cell(&self, detector: &str, training_set: &str, test_set: &str) -> Option<&DeltaCell> {
        self.cells
            .iter()
            .find(|c| c.detector == detector && c.training_set == training_set && c.test_set == test_set)
    }

    pub fn mean(&self, training_set: &str, test_set: &str) -> Option<&DeltaMean> {
        self.means.iter().find(|m| m.training_set == training_set && m.test_set == test_set)
    }
}

/// Percentage-point change of every augmented training set against
/// `baseline`, plus per (training set, test set) means over the detectors
/// not in `exclusions`. Augmented cells missing from the table are skipped;
/// a missing baseline cell is an error.
pub fn improvement_deltas(
    table: &ResultsTable,
    baseline: &str,
    exclusions: &[&str],
) -> Result<DeltaTable, RunnerError> {
    if !table.training_sets.iter().any(|t| t == baseline) {
        return Err(RunnerError::Analysis(format!("baseline training set '{baseline}' is not in the table")));
    }
    let mut cells = Vec::new();
    let mut means = Vec::new();
    for ts in table.training_sets.iter().filter(|t| *t != baseline) {
        for test in &table.test_sets {
            let mut members = Vec::new();
            let mut sum = 0.0;
            for det in &table.detectors {
                let base = table.cell(det, baseline, test).ok_or_else(|| {
                    RunnerError::Analysis(format!("missing baseline cell ({det}, {baseline}, {test})"))
                })?;
                let Some(aug) = table.cell(det, ts, test) else { continue };
                let delta_pp = 100.0 * aug.map - 100.0 * base.map;
                cells.push(DeltaCell {
                    detector: det.clone(),
                    training_set: ts.clone(),
                    test_set: test.clone(),
                    baseline_map: base.map,
                    augmented_map: aug.map,
                    delta_pp,
                });
                if !exclusions.contains(&det.as_str()) {
                    members.push(det.clone());
                    sum += delta_pp;
                }
            }
            if !members.is_empty() {
                let mean_pp = sum / members.len() as f64;
                means.push(DeltaMean { training_set: ts.clone(), test_set: test.clone(), mean_pp, members });
            }
        }
    }
    Ok(DeltaTable {
        baseline: baseline.to_string(),
        excluded: exclusions.iter().map(|s| s.to_string()).collect(),
        cells,
        means,
    })
}
