//! Frechet distance between feature distributions of two image sets.

mod extractor;
mod gaussian;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extractor::{FeatureExtractor, HistogramExtractor};
pub use gaussian::{fit_gaussian, frechet_distance, frechet_terms, FeatureGaussian, FrechetTerms};

use crate::dataset::Dataset;
use crate::exec;
use crate::imaging::load_rgb;

/// Shrinkage weight applied when a set has fewer than `5 * d` samples.
pub const SHRINKAGE_GAMMA: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum FidError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidReport {
    pub value: f64,
    pub extractor: String,
    pub feature_dim: usize,
    pub set_a: String,
    pub set_b: String,
    pub count_a: usize,
    pub count_b: usize,
    pub mean_term: f64,
    pub trace_term: f64,
    /// Shrinkage weight applied to each set's covariance, if any.
    pub shrinkage_a: Option<f64>,
    pub shrinkage_b: Option<f64>,
}

/// Feature rows for every record of `ds`, in record order.
pub fn extract_features(
    extractor: &dyn FeatureExtractor,
    ds: &Dataset,
) -> Result<Vec<Vec<f64>>, FidError> {
    exec::try_map(ds.records(), |r| {
        let img = load_rgb(&r.image_path)
            .map_err(|e| FidError::Data(format!("record '{}': {e}", r.id)))?;
        let f = extractor.extract(&img);
        if f.len() != extractor.dim() || f.iter().any(|v| !v.is_finite()) {
            return Err(FidError::Data(format!(
                "extractor '{}' produced an invalid vector for record '{}'",
                extractor.name(),
                r.id
            )));
        }
        Ok(f)
    })
}

fn fit_for_fid(rows: &[Vec<f64>], d: usize) -> Result<(FeatureGaussian, Option<f64>), FidError> {
    let g = fit_gaussian(rows)?;
    if rows.len() < 5 * d {
        Ok((g.shrink(SHRINKAGE_GAMMA), Some(SHRINKAGE_GAMMA)))
    } else {
        Ok((g, None))
    }
}

/// Distance between the feature distributions of two datasets.
pub fn fid_between(
    extractor: &dyn FeatureExtractor,
    set_a: &Dataset,
    set_b: &Dataset,
) -> Result<FidReport, FidError> {
    let fa = extract_features(extractor, set_a)?;
    let fb = extract_features(extractor, set_b)?;
    fid_from_features(extractor, set_a.name(), &fa, set_b.name(), &fb)
}

pub fn fid_from_features(
    extractor: &dyn FeatureExtractor,
    name_a: &str,
    fa: &[Vec<f64>],
    name_b: &str,
    fb: &[Vec<f64>],
) -> Result<FidReport, FidError> {
    let d = extractor.dim();
    let (ga, sa) = fit_for_fid(fa, d)?;
    let (gb, sb) = fit_for_fid(fb, d)?;
    let t = frechet_terms(&ga, &gb)?;
    Ok(FidReport {
        value: t.value,
        extractor: extractor.name().to_string(),
        feature_dim: d,
        set_a: name_a.to_string(),
        set_b: name_b.to_string(),
        count_a: fa.len(),
        count_b: fb.len(),
        mean_term: t.mean_term,
        trace_term: t.trace_term,
        shrinkage_a: sa,
        shrinkage_b: sb,
    })
}

/// Audit CSV: `id,f0,f1,...` per image.
pub fn write_features_csv(path: &Path, ds: &Dataset, rows: &[Vec<f64>]) -> Result<(), FidError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let d = rows.first().map_or(0, Vec::len);
    let header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    writeln!(f, "id,{}", header.join(","))?;
    for (r, row) in ds.records().iter().zip(rows) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{},{}", r.id, vals.join(","))?;
    }
    f.flush()?;
    Ok(())
}
