use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use advaug_detect::{
    builtin_adapter, BenchOptions, DetectorAdapter, ExternalAdapter, NoiseOracle, NoiseOracleConfig, TinyDetector,
    TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::RunnerError;

fn default_iou() -> f64 {
    0.5
}

fn default_parallel() -> usize {
    1
}

/// One experiment matrix. Training sets are compositions of dataset names
/// joined with `+` (for example `sunny+fake_night`); they are merged when
/// the matrix runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub detectors: Vec<String>,
    /// Dataset name to manifest path.
    pub datasets: BTreeMap<String, PathBuf>,
    pub training_sets: Vec<String>,
    pub test_sets: Vec<String>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    pub output_root: PathBuf,
    #[serde(default)]
    pub noise_oracle: NoiseOracleConfig,
    #[serde(default)]
    pub external: Vec<ExternalAdapter>,
    /// Throughput measurement per detector; skipped when absent.
    #[serde(default)]
    pub benchmark: Option<BenchOptions>,
    /// Upper bound on (detector, training set) units trained concurrently.
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
}

impl ExperimentConfig {
    /// Reads a TOML document; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.datasets.values_mut().for_each(resolve);
        resolve(&mut cfg.output_root);
        for e in &mut cfg.external {
            resolve(&mut e.work_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, RunnerError> {
        toml::to_string_pretty(self).map_err(|e| RunnerError::Config(e.to_string()))
    }

    pub fn composition(name: &str) -> Vec<&str> {
        name.split('+').map(str::trim).collect()
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let err = |m: String| Err(RunnerError::Config(m));
        let unique = |what: &str, names: &[String]| -> Result<(), RunnerError> {
            let mut seen = BTreeSet::new();
            if names.is_empty() {
                return Err(RunnerError::Config(format!("no {what} listed")));
            }
            match names.iter().find(|n| !seen.insert(n.as_str())) {
                Some(dup) => Err(RunnerError::Config(format!("{what} '{dup}' listed twice"))),
                None => Ok(()),
            }
        };
        unique("detectors", &self.detectors)?;
        unique("training sets", &self.training_sets)?;
        unique("test sets", &self.test_sets)?;
        for ts in &self.training_sets {
            let parts = Self::composition(ts);
            if parts.iter().collect::<BTreeSet<_>>().len() != parts.len() {
                return err(format!("training set '{ts}' repeats a part"));
            }
            if let Some(p) = parts.iter().find(|p| !self.datasets.contains_key(**p)) {
                return err(format!("training set '{ts}' references unknown dataset '{p}'"));
            }
        }
        if let Some(t) = self.test_sets.iter().find(|t| !self.datasets.contains_key(t.as_str())) {
            return err(format!("unknown test set '{t}'"));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return err(format!("iou_threshold must lie in (0, 1], got {}", self.iou_threshold));
        }
        if self.max_parallel == 0 {
            return err("max_parallel must be at least 1".into());
        }
        self.train.validate()?;
        self.noise_oracle.validate()?;
        let mut ext = BTreeSet::new();
        for e in &self.external {
            if builtin_adapter(&e.name).is_some() || !ext.insert(e.name.as_str()) {
                return err(format!("external detector name '{}' is already taken", e.name));
            }
        }
        if let Some(d) = self.detectors.iter().find(|d| builtin_adapter(d).is_none() && !ext.contains(d.as_str())) {
            return err(format!("unknown detector '{d}'"));
        }
        Ok(())
    }

    pub fn adapter(&self, name: &str) -> Result<Box<dyn DetectorAdapter>, RunnerError> {
        match name {
            NoiseOracle::NAME => Ok(Box::new(NoiseOracle { config: self.noise_oracle.clone() })),
            TinyDetector::NAME => Ok(Box::new(TinyDetector)),
            _ => self
                .external
                .iter()
                .find(|e| e.name == name)
                .map(|e| Box::new(e.clone()) as Box<dyn DetectorAdapter>)
                .ok_or_else(|| RunnerError::Config(format!("unknown detector '{name}'"))),
        }
    }

    /// Adapter settings that influence results, for cache keys.
    pub(crate) fn adapter_fingerprint(&self, name: &str) -> String {
        match name {
            NoiseOracle::NAME => serde_json::to_string(&self.noise_oracle).expect("serializes"),
            _ => self
                .external
                .iter()
                .find(|e| e.name == name)
                .map(|e| serde_json::to_string(e).expect("serializes"))
                .unwrap_or_default(),
        }
    }
}
