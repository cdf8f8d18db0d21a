//! Training and evaluation of every (detector, training set, test set) cell.
//!
//! Each (detector, training set) unit trains once and is evaluated on every
//! test set. Results are cached under `output_root/cells/<detector>/<training
//! set>/` together with a hash of everything that determines them, so a
//! re-run only recomputes cells whose inputs changed or that never finished.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use advaug_core::dataset::{dataset_digest, load_manifest, merge_datasets, Dataset};
use advaug_core::deteval::{evaluate, write_predictions, EvalReport};
use advaug_core::{exec, seeding};
use advaug_detect::{flop_report, measure_throughput, DetectorAdapter, FlopReport, ModelRef, PerfRecord, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::{io_err, RunnerError};

pub const RESULTS_FILE: &str = "results.json";
const MODEL_FILE: &str = "model.json";
const ERROR_FILE: &str = "error.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub detector: String,
    pub training_set: String,
    pub test_set: String,
    pub map: f64,
    /// `None` for classes without ground truth in the test set.
    pub per_class_ap: BTreeMap<u32, Option<f64>>,
    /// Evaluation report, relative to the output root.
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub detector: String,
    pub training_set: String,
    /// `None` when training itself failed, taking down the whole row.
    pub test_set: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorCost {
    pub detector: String,
    pub flops: FlopReport,
    pub params: Option<u64>,
    pub perf: Option<PerfRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub detectors: Vec<String>,
    pub training_sets: Vec<String>,
    pub test_sets: Vec<String>,
    pub iou_threshold: f64,
    /// Ordered by detector, training set, test set (configuration order).
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub costs: Vec<DetectorCost>,
}

impl ResultsTable {
    pub fn cell(&self, detector: &str, training_set: &str, test_set: &str) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.detector == detector && c.training_set == training_set && c.test_set == test_set)
    }

    pub fn expected_cells(&self) -> usize {
        self.detectors.len() * self.training_sets.len() * self.test_sets.len()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.len() == self.expected_cells()
    }

    pub fn cost(&self, detector: &str) -> Option<&DetectorCost> {
        self.costs.iter().find(|c| c.detector == detector)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after computing this many new cells, as if interrupted. Cached
    /// cells do not count.
    pub stop_after_cells: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Cached<T> {
    hash: String,
    value: T,
}

fn read_cached<T: DeserializeOwned>(path: &Path, hash: &str) -> Option<T> {
    let text = fs::read_to_string(path).ok()?;
    let c: Cached<T> = serde_json::from_str(&text).ok()?;
    (c.hash == hash).then_some(c.value)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunnerError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    let tmp = path.with_extension("json.partial");
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn hash_of(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Seed for one (detector, training set) unit.
pub fn unit_seed(seed: u64, detector: &str, training_set: &str) -> u64 {
    seeding::derive(seed, &[detector, training_set])
}

struct Inputs {
    datasets: BTreeMap<String, Dataset>,
    digests: BTreeMap<String, String>,
}

impl Inputs {
    fn load(cfg: &ExperimentConfig) -> Result<Self, RunnerError> {
        let mut used: Vec<&str> = cfg.test_sets.iter().map(String::as_str).collect();
        for ts in &cfg.training_sets {
            used.extend(ExperimentConfig::composition(ts));
        }
        used.sort_unstable();
        used.dedup();
        let mut datasets = BTreeMap::new();
        let mut digests = BTreeMap::new();
        for name in used {
            let ds = load_manifest(&cfg.datasets[name])?.renamed(name);
            digests.insert(name.to_string(), dataset_digest(&ds)?);
            datasets.insert(name.to_string(), ds);
        }
        Ok(Self { datasets, digests })
    }

    fn training_set(&self, name: &str) -> Result<Dataset, RunnerError> {
        let parts: Vec<Dataset> =
            ExperimentConfig::composition(name).iter().map(|p| self.datasets[*p].clone()).collect();
        Ok(merge_datasets(&parts)?)
    }
}

struct UnitOutcome {
    cells: Vec<CellResult>,
    failures: Vec<CellFailure>,
    model: Option<ModelRef>,
}

struct Unit<'a> {
    cfg: &'a ExperimentConfig,
    inputs: &'a Inputs,
    detector: &'a str,
    training_set: &'a str,
    budget: Option<&'a AtomicUsize>,
}

impl Unit<'_> {
    fn dir(&self) -> PathBuf {
        self.cfg.output_root.join(self.rel_dir())
    }

    fn rel_dir(&self) -> String {
        format!("cells/{}/{}", self.detector, self.training_set)
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: unit_seed(self.cfg.seed, self.detector, self.training_set), ..self.cfg.train.clone() }
    }

    fn model_hash(&self, train: &TrainConfig) -> String {
        let parts = ExperimentConfig::composition(self.training_set);
        let digests: Vec<&str> = parts.iter().map(|p| self.inputs.digests[*p].as_str()).collect();
        let train_json = serde_json::to_string(train).expect("serializes");
        let fingerprint = self.cfg.adapter_fingerprint(self.detector);
        let mut fields = vec![self.detector, self.training_set, &train_json, &fingerprint];
        fields.extend(digests);
        hash_of(&fields)
    }

    /// Takes one unit of the interruption budget; false once it is spent.
    fn take_budget(&self) -> bool {
        match self.budget {
            None => true,
            Some(b) => b.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok(),
        }
    }

    fn run(&self) -> UnitOutcome {
        let mut out = UnitOutcome { cells: Vec::new(), failures: Vec::new(), model: None };
        let fail = |test_set: Option<&str>, e: &RunnerError| CellFailure {
            detector: self.detector.to_string(),
            training_set: self.training_set.to_string(),
            test_set: test_set.map(str::to_string),
            message: e.to_string(),
        };
        let dir = self.dir();
        let adapter = match self.cfg.adapter(self.detector) {
            Ok(a) => a,
            Err(e) => {
                out.failures.push(fail(None, &e));
                return out;
            }
        };
        let train = self.train_config();
        let model_hash = self.model_hash(&train);
        let model = match self.model(adapter.as_ref(), &train, &model_hash) {
            Ok(Some(m)) => m,
            Ok(None) => return out,
            Err(e) => {
                self.mark_error(&dir, None, &e);
                out.failures.push(fail(None, &e));
                return out;
            }
        };
        for test in &self.cfg.test_sets {
            match self.cell(adapter.as_ref(), &model, &model_hash, test) {
                Ok(Some(c)) => out.cells.push(c),
                Ok(None) => break,
                Err(e) => {
                    self.mark_error(&dir, Some(test), &e);
                    out.failures.push(fail(Some(test), &e));
                }
            }
        }
        out.model = Some(model);
        out
    }

    fn mark_error(&self, dir: &Path, test: Option<&str>, e: &RunnerError) {
        let name = test.map_or(ERROR_FILE.to_string(), |t| format!("{t}.{ERROR_FILE}"));
        log::warn!("cell {}/{}/{}: {e}", self.detector, self.training_set, test.unwrap_or("*"));
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join(name), e.to_string());
        }
    }

    fn model(
        &self,
        adapter: &dyn DetectorAdapter,
        train: &TrainConfig,
        hash: &str,
    ) -> Result<Option<ModelRef>, RunnerError> {
        let dir = self.dir();
        let path = dir.join(MODEL_FILE);
        if let Some(m) = read_cached::<ModelRef>(&path, hash) {
            return Ok(Some(m));
        }
        // A model is only worth training if at least one cell can follow.
        if self.budget.is_some_and(|b| b.load(Ordering::SeqCst) == 0) {
            return Ok(None);
        }
        let ds = self.inputs.training_set(self.training_set)?;
        log::info!("training {} on {} ({} images)", self.detector, self.training_set, ds.len());
        let model = adapter.train(&ds, train)?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let _ = fs::remove_file(dir.join(ERROR_FILE));
        write_json(&path, &Cached { hash: hash.to_string(), value: &model })?;
        Ok(Some(model))
    }

    fn cell(
        &self,
        adapter: &dyn DetectorAdapter,
        model: &ModelRef,
        model_hash: &str,
        test: &str,
    ) -> Result<Option<CellResult>, RunnerError> {
        let dir = self.dir();
        let report_path = dir.join(format!("{test}.json"));
        let iou = self.cfg.iou_threshold.to_string();
        let hash = hash_of(&[model_hash, test, &self.inputs.digests[test], &iou]);
        let report = match read_cached::<EvalReport>(&report_path, &hash) {
            Some(r) => r,
            None => {
                if !self.take_budget() {
                    return Ok(None);
                }
                let ds = &self.inputs.datasets[test];
                let dets = adapter.predict(model, ds)?;
                let report = evaluate(&dets, ds, self.cfg.iou_threshold)?;
                write_predictions(&dir.join(format!("{test}.predictions.jsonl")), &dets)?;
                write_json(&report_path, &Cached { hash, value: &report })?;
                let _ = fs::remove_file(dir.join(format!("{test}.{ERROR_FILE}")));
                report
            }
        };
        Ok(Some(CellResult {
            detector: self.detector.to_string(),
            training_set: self.training_set.to_string(),
            test_set: test.to_string(),
            map: report.map,
            per_class_ap: report.per_class.iter().map(|(k, c)| (*k, c.ap)).collect(),
            report: format!("{}/{test}.json", self.rel_dir()),
        }))
    }
}

pub fn run_matrix(cfg: &ExperimentConfig) -> Result<ResultsTable, RunnerError> {
    run_matrix_with(cfg, &RunOptions::default())
}

/// Runs (or resumes) the matrix and writes `results.json` into the output
/// root. Failed cells are listed in the table rather than aborting the run.
pub fn run_matrix_with(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultsTable, RunnerError> {
    cfg.validate()?;
    let inputs = Inputs::load(cfg)?;
    fs::create_dir_all(&cfg.output_root).map_err(io_err(&cfg.output_root))?;

    let budget = opts.stop_after_cells.map(AtomicUsize::new);
    let units: Vec<Unit> = cfg
        .detectors
        .iter()
        .flat_map(|d| cfg.training_sets.iter().map(move |t| (d, t)))
        .map(|(d, t)| Unit { cfg, inputs: &inputs, detector: d, training_set: t, budget: budget.as_ref() })
        .collect();

    // An interruption budget is only meaningful in a fixed order.
    let width = if budget.is_some() { 1 } else { cfg.max_parallel };
    let mut outcomes = Vec::with_capacity(units.len());
    for group in units.chunks(width) {
        if group.len() == 1 {
            outcomes.push(group[0].run());
        } else {
            outcomes.extend(exec::map(group, Unit::run));
        }
    }

    let mut table = ResultsTable {
        detectors: cfg.detectors.clone(),
        training_sets: cfg.training_sets.clone(),
        test_sets: cfg.test_sets.clone(),
        iou_threshold: cfg.iou_threshold,
        cells: Vec::new(),
        failures: Vec::new(),
        costs: Vec::new(),
    };
    let mut first_models: BTreeMap<&str, ModelRef> = BTreeMap::new();
    for (unit, o) in units.iter().zip(outcomes) {
        table.cells.extend(o.cells);
        table.failures.extend(o.failures);
        if let Some(m) = o.model {
            first_models.entry(unit.detector).or_insert(m);
        }
    }

    for d in &cfg.detectors {
        let Some(model) = first_models.get(d.as_str()) else { continue };
        let adapter = cfg.adapter(d)?;
        let perf = match (&cfg.benchmark, cfg.test_sets.first()) {
            (Some(b), Some(t)) => match measure_throughput(adapter.as_ref(), model, &inputs.datasets[t], b) {
                Ok(p) => Some(p),
                Err(e) => {
                    log::warn!("benchmark of {d} failed: {e}");
                    None
                }
            },
            _ => None,
        };
        table.costs.push(DetectorCost {
            detector: d.clone(),
            flops: flop_report(adapter.as_ref(), model),
            params: adapter.parameter_count(model),
            perf,
        });
    }

    write_json(&cfg.output_root.join(RESULTS_FILE), &table)?;
    Ok(table)
}

pub fn load_results(path: &Path) -> Result<ResultsTable, RunnerError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))
}
