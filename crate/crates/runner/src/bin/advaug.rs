use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use advaug_core::dataset::{load_manifest, Condition, Dataset};
use advaug_core::deteval::{evaluate, read_predictions};
use advaug_core::fid::{fid_between, HistogramExtractor};
use advaug_core::scenes::{generate_scenes, SceneConfig, SceneStyle};
use advaug_detect::{append_perf_csv, measure_throughput, BenchOptions, ModelRef, TrainConfig};
use advaug_gan::{resume, synthesize_dataset, train, verify_label_preservation, Direction, GanConfig, ResizePolicy, SynthesisJob};
use advaug_runner::matrix::{load_results, RESULTS_FILE};
use advaug_runner::{
    improvement_deltas, render_report, run_matrix, write_report, ExperimentConfig, RunnerError,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "advaug", version, about = "Adverse-weather augmentation pipeline")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render procedural scenes with labels.
    GenScenes {
        #[arg(long, default_value = "sunny")]
        style: SceneStyle,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        width: u32,
        #[arg(long, default_value_t = 128)]
        height: u32,
        #[arg(long)]
        name: Option<String>,
    },
    /// Train an unpaired translator between two domains.
    TrainGan {
        #[arg(long)]
        domain_a: PathBuf,
        #[arg(long)]
        domain_b: PathBuf,
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from this checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Translate a sunny dataset into a labelled fake-weather dataset.
    Synthesize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        condition: Condition,
        #[arg(long, default_value = "a_to_b")]
        direction: Direction,
        #[arg(long)]
        name: String,
        #[arg(long)]
        require_exact_size: bool,
    },
    /// Frechet distance between two datasets.
    Fid {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Train one detector on one dataset.
    TrainDetector {
        #[arg(long)]
        detector: String,
        #[arg(long)]
        train: PathBuf,
    },
    /// mAP of a prediction file or a trained model on a dataset.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, conflicts_with = "model")]
        predictions: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Throughput of a trained model.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
    },
    /// Run or resume the experiment matrix from --config.
    RunMatrix,
    /// Render the report for a results file.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "sunny")]
        baseline: String,
        #[arg(long)]
        exclude: Vec<String>,
    },
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn experiment(cli: &Cli) -> Result<Option<ExperimentConfig>, RunnerError> {
    let Some(path) = &cli.config else { return Ok(None) };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_root = o.clone();
    }
    Ok(Some(cfg))
}

fn manifest(path: &Path) -> Result<Dataset, RunnerError> {
    Ok(load_manifest(path)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), RunnerError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| RunnerError::Io { path: parent.to_path_buf(), source })?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text).map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })
}

fn load_model(path: &Path) -> Result<ModelRef, RunnerError> {
    let text = fs::read_to_string(path).map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), RunnerError> {
    let exp = experiment(cli)?;
    let seed = cli.seed.or(exp.as_ref().map(|e| e.seed)).unwrap_or(0);
    let out = out_dir(cli);
    let train_cfg = || TrainConfig { seed, ..exp.as_ref().map_or_else(TrainConfig::desk, |e| e.train.clone()) };
    let adapter = |name: &str| match &exp {
        Some(e) => e.adapter(name),
        None => advaug_detect::builtin_adapter(name)
            .ok_or_else(|| RunnerError::Config(format!("unknown detector '{name}'"))),
    };

    match &cli.command {
        Command::GenScenes { style, count, width, height, name } => {
            let cfg = SceneConfig { width: *width, height: *height, count: *count, seed, ..SceneConfig::default() };
            let name = name.clone().unwrap_or_else(|| style.condition().to_string());
            let (ds, log) = generate_scenes(&cfg, *style, &name, &out)?;
            println!("{} images, {} boxes written to {}", ds.len(), log.total_boxes, out.display());
        }
        Command::TrainGan { domain_a, domain_b, preset, epochs, resume: from } => {
            let (a, b) = (manifest(domain_a)?, manifest(domain_b)?);
            let ck = match from {
                Some(dir) => {
                    let total = epochs.ok_or_else(|| RunnerError::Config("--resume needs --epochs".into()))?;
                    resume(dir, total, &a, &b, &out)?
                }
                None => {
                    let mut cfg = GanConfig::preset(preset)?;
                    cfg.seed = seed;
                    if let Some(e) = epochs {
                        cfg.epochs = *e;
                    }
                    train(&cfg, &a, &b, &out)?
                }
            };
            println!("checkpoint {} (epoch {}, id {})", ck.path.display(), ck.epoch, ck.id);
        }
        Command::Synthesize { checkpoint, source, condition, direction, name, require_exact_size } => {
            let job = SynthesisJob {
                checkpoint: checkpoint.clone(),
                direction: *direction,
                source: manifest(source)?,
                target_condition: *condition,
                output_root: out.clone(),
                name: name.clone(),
                resize: if *require_exact_size { ResizePolicy::RequireExact } else { ResizePolicy::Bilinear },
            };
            let ds = synthesize_dataset(&job)?;
            let labels = verify_label_preservation(&job.source, &ds);
            println!("{} images synthesized; labels preserved: {}", ds.len(), labels.preserved);
        }
        Command::Fid { a, b } => {
            let report = fid_between(&HistogramExtractor, &manifest(a)?, &manifest(b)?)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            if cli.out.is_some() {
                write_json(&out.join("fid.json"), &report)?;
            }
        }
        Command::TrainDetector { detector, train } => {
            let ds = manifest(train)?;
            let model = adapter(detector)?.train(&ds, &train_cfg())?;
            let path = out.join("model.json");
            write_json(&path, &model)?;
            println!("model written to {}", path.display());
        }
        Command::Evaluate { gt, predictions, model, iou } => {
            let ds = manifest(gt)?;
            let dets = match (predictions, model) {
                (Some(p), _) => read_predictions(p)?,
                (None, Some(m)) => {
                    let model = load_model(m)?;
                    adapter(&model.detector)?.predict(&model, &ds)?
                }
                (None, None) => return Err(RunnerError::Config("pass --predictions or --model".into())),
            };
            let report = evaluate(&dets, &ds, *iou)?;
            print!("{}", report.render_text());
            if cli.out.is_some() {
                write_json(&out.join("eval.json"), &report)?;
            }
        }
        Command::Bench { model, data, warmup, frames } => {
            let model = load_model(model)?;
            let opts = BenchOptions { warmup: *warmup, measured_frames: *frames, ..BenchOptions::default() };
            let rec = measure_throughput(adapter(&model.detector)?.as_ref(), &model, &manifest(data)?, &opts)?;
            println!("{}", serde_json::to_string_pretty(&rec).expect("serializable"));
            if cli.out.is_some() {
                fs::create_dir_all(&out).map_err(|source| RunnerError::Io { path: out.clone(), source })?;
                append_perf_csv(&out.join("perf.csv"), &rec)?;
            }
        }
        Command::RunMatrix => {
            let cfg = exp.ok_or_else(|| RunnerError::Config("run-matrix needs --config".into()))?;
            let table = run_matrix(&cfg)?;
            let baseline = cfg.training_sets[0].clone();
            match improvement_deltas(&table, &baseline, &[]) {
                Ok(deltas) => {
                    write_report(&render_report(&table, &deltas)?, &cfg.output_root)?;
                }
                Err(e) => log::warn!("report skipped: {e}"),
            }
            println!(
                "{} of {} cells complete; results in {}",
                table.cells.len(),
                table.expected_cells(),
                cfg.output_root.join(RESULTS_FILE).display()
            );
            if !table.failures.is_empty() {
                return Err(RunnerError::Partial { failed: table.failures.len(), total: table.expected_cells() });
            }
        }
        Command::Report { results, baseline, exclude } => {
            let table = load_results(results)?;
            let excluded: Vec<&str> = exclude.iter().map(String::as_str).collect();
            let deltas = improvement_deltas(&table, baseline, &excluded)?;
            let dir = cli.out.clone().unwrap_or_else(|| results.parent().unwrap_or(Path::new(".")).to_path_buf());
            for p in write_report(&render_report(&table, &deltas)?, &dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
