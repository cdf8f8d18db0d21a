//! Markdown grid, JSON document and plot data for a finished matrix.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deltas::DeltaTable;
use crate::matrix::ResultsTable;
use crate::{io_err, RunnerError};

pub const MARKDOWN_FILE: &str = "report.md";
pub const JSON_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "deltas.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub results: ResultsTable,
    pub deltas: DeltaTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub markdown: String,
    pub json: String,
    pub plot_csv: String,
}

/// Detectors reaching the row maximum (several on ties). Empty when the row
/// has no results.
pub fn best_per_row<'a>(table: &'a ResultsTable, training_set: &str, test_set: &str) -> Vec<&'a str> {
    let row: Vec<(&str, f64)> = table
        .detectors
        .iter()
        .filter_map(|d| table.cell(d, training_set, test_set).map(|c| (d.as_str(), c.map)))
        .collect();
    let Some(best) = row.iter().map(|r| r.1).reduce(f64::max) else { return Vec::new() };
    row.into_iter().filter(|r| r.1 == best).map(|r| r.0).collect()
}

fn markdown(table: &ResultsTable, deltas: &DeltaTable) -> String {
    let mut s = String::new();
    let header = |s: &mut String, extra: Option<&str>| {
        s.push_str("| Training set | Test set |");
        for d in table.detectors.iter().map(String::as_str).chain(extra) {
            let _ = write!(s, " {d} |");
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---:|".repeat(table.detectors.len() + usize::from(extra.is_some())));
        s.push('\n');
    };

    let _ = writeln!(s, "## mAP@{}\n", table.iou_threshold);
    header(&mut s, None);
    for ts in &table.training_sets {
        for test in &table.test_sets {
            let best = best_per_row(table, ts, test);
            let _ = write!(s, "| {ts} | {test} |");
            for d in &table.detectors {
                match table.cell(d, ts, test) {
                    Some(c) if best.contains(&d.as_str()) => {
                        let _ = write!(s, " **{:.3}** |", c.map);
                    }
                    Some(c) => {
                        let _ = write!(s, " {:.3} |", c.map);
                    }
                    None => s.push_str(" failed |"),
                }
            }
            s.push('\n');
        }
    }
    s.push_str("| Speed (fps) | |");
    for d in &table.detectors {
        match table.cost(d).and_then(|c| c.perf.as_ref()) {
            Some(p) => {
                let _ = write!(s, " {:.2} |", p.fps);
            }
            None => s.push_str(" n/a |"),
        }
    }
    s.push_str("\n| FLOPs per pass | |");
    for d in &table.detectors {
        let _ = write!(s, " {} |", table.cost(d).map_or("n/a".to_string(), |c| c.flops.to_string()));
    }
    s.push('\n');

    if !deltas.cells.is_empty() {
        let _ = writeln!(s, "\n## Change against {} (pp)\n", deltas.baseline);
        header(&mut s, Some("mean"));
        let mut rows: Vec<(&str, &str)> = deltas.cells.iter().map(|c| (&*c.training_set, &*c.test_set)).collect();
        rows.dedup();
        for (ts, test) in rows {
            let _ = write!(s, "| {ts} | {test} |");
            for d in &table.detectors {
                match deltas.cell(d, ts, test) {
                    Some(c) => {
                        let _ = write!(s, " {:+.1} |", c.delta_pp);
                    }
                    None => s.push_str(" - |"),
                }
            }
            match deltas.mean(ts, test) {
                Some(m) => {
                    let _ = write!(s, " {:+.2} |", m.mean_pp);
                }
                None => s.push_str(" - |"),
            }
            s.push('\n');
        }
        if !deltas.excluded.is_empty() {
            let _ = writeln!(s, "\nMeans exclude: {}.", deltas.excluded.join(", "));
        }
    }
    if !table.failures.is_empty() {
        s.push_str("\n## Failed cells\n\n");
        for f in &table.failures {
            let _ = writeln!(
                s,
                "- {} / {} / {}: {}",
                f.detector,
                f.training_set,
                f.test_set.as_deref().unwrap_or("all test sets"),
                f.message
            );
        }
    }
    s
}

fn plot_csv(deltas: &DeltaTable) -> Result<String, RunnerError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| RunnerError::Analysis(format!("plot data: {e}"));
    w.write_record(["training_set", "test_set", "detector", "baseline_map", "augmented_map", "delta_pp"])
        .map_err(err)?;
    for c in &deltas.cells {
        w.write_record([
            c.training_set.clone(),
            c.test_set.clone(),
            c.detector.clone(),
            c.baseline_map.to_string(),
            c.augmented_map.to_string(),
            c.delta_pp.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| RunnerError::Analysis(format!("plot data: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn render_report(table: &ResultsTable, deltas: &DeltaTable) -> Result<ReportBundle, RunnerError> {
    let doc = ReportDoc { results: table.clone(), deltas: deltas.clone() };
    Ok(ReportBundle {
        markdown: markdown(table, deltas),
        json: serde_json::to_string_pretty(&doc).expect("report serializes"),
        plot_csv: plot_csv(deltas)?,
    })
}

pub fn parse_report_json(text: &str) -> Result<ReportDoc, RunnerError> {
    serde_json::from_str(text).map_err(|e| RunnerError::Analysis(format!("report JSON: {e}")))
}

/// Writes the three report files into `dir` and returns their paths.
pub fn write_report(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>, RunnerError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (name, text) in [(MARKDOWN_FILE, &bundle.markdown), (JSON_FILE, &bundle.json), (PLOT_FILE, &bundle.plot_csv)] {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))?;
        written.push(p);
    }
    Ok(written)
}
