//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Exits non-zero when an implementation check fails. A mismatch against a
//! published figure whose inputs were verified independently is reported as
//! FAIL but does not change the exit status.

#[path = "../../core/tests/support/ap_oracle.rs"]
#[allow(dead_code)]
mod ap_oracle;
#[path = "../../core/tests/support/fid_cases.rs"]
#[allow(dead_code)]
mod fid_cases;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use advaug_core::dataset::{cone_class_map, merge_datasets, Condition, Dataset, ImageRecord, MANIFEST_FILE};
use advaug_core::deteval::{evaluate, Detection};
use advaug_core::fid::{fid_between, fit_gaussian, frechet_distance, frechet_terms, HistogramExtractor};
use advaug_core::scenes::{generate_scenes, SceneConfig, SceneStyle};
use advaug_detect::{
    measure_throughput, BenchOptions, DetectError, DetectorAdapter, Frame, ModelRef, NoiseOracle, TinyDetector,
    TrainConfig,
};
use advaug_gan::config::{DiscriminatorKind, GeneratorKind};
use advaug_gan::train::GanTrainState;
use advaug_gan::{
    epoch_cycle_means, generator_objective, load_checkpoint, synthesize_dataset, train, verify_label_preservation,
    Direction, GanConfig, ResizePolicy, SynthesisJob,
};
use advaug_runner::{improvement_deltas, run_matrix, run_matrix_with, CellResult, ExperimentConfig, ResultsTable, RunOptions};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    /// The implementation is verified but a published figure is not reproduced.
    PublishedMismatch(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

// ---------------------------------------------------------------- 1

fn metric_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0a9);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..200 {
        let inst = ap_oracle::random_instance(&mut rng);
        let report = evaluate(&inst.dets, &ap_oracle::dataset(&inst), 0.5).unwrap();
        let (per_class, map) = ap_oracle::oracle_map(&inst);
        let err = (report.map - ap_oracle::to_f64(&map)).abs();
        worst = worst.max(err);
        let classes_agree = per_class.iter().enumerate().all(|(c, ap)| match (ap, report.ap(c as u32)) {
            (None, None) => true,
            (Some(exact), Some(got)) => (got - ap_oracle::to_f64(exact)).abs() <= 1e-12,
            _ => false,
        });
        if err > 1e-12 || !classes_agree {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    verdict(
        mismatches == 0 && t < Duration::from_secs(30),
        format!("200 instances, {mismatches} mismatches, max |dmAP| {worst:e}, {t:.2?}"),
    )
}

// ---------------------------------------------------------------- 2

fn frechet() -> Verdict {
    use fid_cases::*;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut identical = 0.0f64;
    for d in [1, 4, 16, 64] {
        let rows: Vec<Vec<f64>> = (0..200).map(|_| random_vector(&mut rng, d).as_slice().to_vec()).collect();
        let g = fit_gaussian(&rows).unwrap();
        identical = identical.max(frechet_distance(&g, &g.clone()).unwrap().abs());
    }
    let mut equal_cov = 0.0f64;
    for _ in 0..50 {
        let d = rng.random_range(1..=10);
        let cov = random_spd(&mut rng, d);
        let (m1, m2) = (random_vector(&mut rng, d), random_vector(&mut rng, d));
        let expected = (&m1 - &m2).norm_squared();
        let got = frechet_distance(&gaussian(m1, cov.clone()), &gaussian(m2, cov)).unwrap();
        equal_cov = equal_cov.max((got - expected).abs());
    }
    let mut diagonal = 0.0f64;
    for _ in 0..100 {
        let c = diagonal_case(&mut rng);
        diagonal = diagonal.max((frechet_distance(&c.g1, &c.g2).unwrap() - c.expected).abs());
    }
    let mut invariance = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..8);
        let (m1, m2) = (random_vector(&mut rng, d), random_vector(&mut rng, d));
        let (s1, s2) = (random_spd(&mut rng, d), random_spd(&mut rng, d));
        let q: DMatrix<f64> = random_orthogonal(&mut rng, d);
        let base = frechet_terms(&gaussian(m1.clone(), s1.clone()), &gaussian(m2.clone(), s2.clone())).unwrap().value;
        let swapped = frechet_distance(&gaussian(m2.clone(), s2.clone()), &gaussian(m1.clone(), s1.clone())).unwrap();
        let rotated = frechet_distance(
            &gaussian(&q * m1, &q * s1 * q.transpose()),
            &gaussian(&q * m2, &q * s2 * q.transpose()),
        )
        .unwrap();
        let rel = |v: f64| (v - base).abs() / base.max(1.0);
        invariance = invariance.max(rel(swapped)).max(rel(rotated));
    }
    let t = start.elapsed();
    verdict(
        identical <= 1e-6 && equal_cov <= 1e-8 && diagonal <= 1e-8 && invariance <= 1e-8 && t < Duration::from_secs(10),
        format!(
            "identical {identical:e}, equal-cov {equal_cov:e}, diagonal {diagonal:e}, symmetry/rotation {invariance:e}, {t:.2?}"
        ),
    )
}

// ---------------------------------------------------------------- 3

const DETECTORS: [&str; 5] = ["YOLOv3", "SYOLOv4", "YOLOv5", "FRCNN", "EfficientDet"];

/// Published mAP@0.5 grid: (training set, test set, one value per detector).
const PUBLISHED: [(&str, &str, [&str; 5]); 12] = [
    ("Sunny", "Sunny", [".89", ".93", ".95", ".97", ".45"]),
    ("Sunny", "Real Night", [".43", ".21", ".22", ".23", ".24"]),
    ("Sunny", "Real Droplet", [".53", ".54", ".53", ".57", ".43"]),
    ("+FakeNight", "Sunny", [".89", ".89", ".97", ".96", ".47"]),
    ("+FakeNight", "Real Night", [".62", ".39", ".73", ".67", ".55"]),
    ("+FakeNight", "Real Droplet", [".57", ".55", ".58", ".60", ".53"]),
    ("+FakeDroplet", "Sunny", [".89", ".88", ".96", ".95", ".36"]),
    ("+FakeDroplet", "Real Night", [".57", ".33", ".25", ".30", ".26"]),
    ("+FakeDroplet", "Real Droplet", [".54", ".51", ".55", ".62", ".36"]),
    ("Monolithic", "Sunny", [".89", ".86", ".97", ".97", ".37"]),
    ("Monolithic", "Real Night", [".68", ".66", ".74", ".71", ".25"]),
    ("Monolithic", "Real Droplet", [".58", ".55", ".61", ".60", ".37"]),
];

fn published_table() -> ResultsTable {
    let mut cells = Vec::new();
    for (d, det) in DETECTORS.iter().enumerate() {
        for (ts, test, row) in PUBLISHED {
            cells.push(CellResult {
                detector: det.to_string(),
                training_set: ts.into(),
                test_set: test.into(),
                map: row[d].parse().unwrap(),
                per_class_ap: BTreeMap::new(),
                report: String::new(),
            });
        }
    }
    let unique = |f: fn(&(&'static str, &'static str, [&'static str; 5])) -> &'static str| {
        let mut seen = BTreeSet::new();
        PUBLISHED.iter().map(f).filter(|s| seen.insert(*s)).map(String::from).collect::<Vec<_>>()
    };
    ResultsTable {
        detectors: DETECTORS.iter().map(|s| s.to_string()).collect(),
        training_sets: unique(|r| r.0),
        test_sets: unique(|r| r.1),
        iou_threshold: 0.5,
        cells,
        failures: Vec::new(),
        costs: Vec::new(),
    }
}

/// Mean pp change of `Monolithic` over `Sunny` on `test`, from the printed
/// hundredths, in exact arithmetic.
fn exact_mean_pp(test: &str, members: &[usize]) -> BigRational {
    let hundredths = |ts: &str, d: usize| -> i64 {
        let row = PUBLISHED.iter().find(|r| r.0 == ts && r.1 == test).unwrap();
        row.2[d].trim_start_matches('.').parse().unwrap()
    };
    let sum: i64 = members.iter().map(|&d| hundredths("Monolithic", d) - hundredths("Sunny", d)).sum();
    BigRational::new(BigInt::from(sum), BigInt::from(members.len()))
}

fn published_grid() -> Verdict {
    let deltas = improvement_deltas(&published_table(), "Sunny", &["EfficientDet"]).unwrap();
    let yolo = deltas.cell("YOLOv5", "Monolithic", "Real Night").unwrap().delta_pp;
    let night = deltas.mean("Monolithic", "Real Night").unwrap().mean_pp;
    let droplet = deltas.mean("Monolithic", "Real Droplet").unwrap().mean_pp;
    let exact_night = exact_mean_pp("Real Night", &[0, 1, 2, 3]).to_f64().unwrap();
    let exact_droplet = exact_mean_pp("Real Droplet", &[0, 1, 2, 3]).to_f64().unwrap();
    let arithmetic_ok = yolo == 52.0 && (night - exact_night).abs() <= 1e-9 && (droplet - exact_droplet).abs() <= 1e-9;
    let published_ok = (night - 42.7).abs() <= 0.05 && (droplet - 4.4).abs() <= 0.05;
    let detail = format!(
        "YOLOv5 night {yolo:+} pp (expected +52); means night {night:+.3} pp (published +42.7), \
         droplet {droplet:+.3} pp (published +4.4); exact means from printed inputs {exact_night} / {exact_droplet}"
    );
    match (arithmetic_ok, published_ok) {
        (true, true) => Verdict::Pass(detail),
        (true, false) => Verdict::PublishedMismatch(detail),
        (false, _) => Verdict::Fail(detail),
    }
}

// ---------------------------------------------------------------- shared scenes and translators

struct Fixture {
    _dir: tempfile::TempDir,
    manifests: BTreeMap<String, PathBuf>,
    sets: BTreeMap<String, Dataset>,
    night_checkpoint: PathBuf,
    gan_time: Duration,
    synthesis_time: Duration,
}

impl Fixture {
    fn set(&self, name: &str) -> &Dataset {
        &self.sets[name]
    }
}

const GAN_SEED: u64 = 11;
const DROPLET_GAN_EPOCHS: usize = 5;

fn build_fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut manifests = BTreeMap::new();
    let mut sets = BTreeMap::new();
    for (name, style, seed, count) in [
        ("sunny", SceneStyle::Sunny, 101, 160),
        ("night", SceneStyle::Night, 102, 160),
        ("droplet", SceneStyle::Droplet, 103, 160),
        ("sunny_test", SceneStyle::Sunny, 201, 60),
        ("night_test", SceneStyle::Night, 202, 60),
        ("droplet_test", SceneStyle::Droplet, 203, 60),
    ] {
        let out = dir.path().join(name);
        let cfg = SceneConfig { count, seed, ..SceneConfig::default() };
        let (ds, _) = generate_scenes(&cfg, style, name, &out).unwrap();
        manifests.insert(name.to_string(), out.join(MANIFEST_FILE));
        sets.insert(name.to_string(), ds);
    }

    let start = Instant::now();
    let night_cfg = GanConfig { seed: GAN_SEED, ..GanConfig::desk() };
    let night_ck = train(&night_cfg, &sets["sunny"], &sets["night"], &dir.path().join("gan_night")).unwrap();
    let gan_time = start.elapsed();
    let droplet_cfg = GanConfig { seed: GAN_SEED, epochs: DROPLET_GAN_EPOCHS, ..GanConfig::desk() };
    let droplet_ck = train(&droplet_cfg, &sets["sunny"], &sets["droplet"], &dir.path().join("gan_droplet")).unwrap();

    let start = Instant::now();
    for (name, ck, condition) in [
        ("fake_night", &night_ck.path, Condition::FakeNight),
        ("fake_droplet", &droplet_ck.path, Condition::FakeDroplet),
    ] {
        let job = SynthesisJob {
            checkpoint: ck.clone(),
            direction: Direction::AToB,
            source: sets["sunny"].clone(),
            target_condition: condition,
            output_root: dir.path().join(name),
            name: name.into(),
            resize: ResizePolicy::Bilinear,
        };
        let ds = synthesize_dataset(&job).unwrap();
        manifests.insert(name.to_string(), job.output_root.join(MANIFEST_FILE));
        sets.insert(name.to_string(), ds);
    }
    Fixture {
        _dir: dir,
        manifests,
        sets,
        night_checkpoint: night_ck.path,
        gan_time,
        synthesis_time: start.elapsed(),
    }
}

// ---------------------------------------------------------------- 4

fn gan_sanity(fx: &Fixture) -> Verdict {
    let history = load_checkpoint(&fx.night_checkpoint).unwrap().history;
    let means = epoch_cycle_means(&history);
    let first = means[..5].iter().sum::<f64>() / 5.0;
    let last = means[means.len() - 5..].iter().sum::<f64>() / 5.0;
    let night = fx.set("night");
    let fake = fid_between(&HistogramExtractor, fx.set("fake_night"), night).unwrap().value;
    let sunny = fid_between(&HistogramExtractor, fx.set("sunny"), night).unwrap().value;
    verdict(
        fx.gan_time < Duration::from_secs(30 * 60) && means.len() == 30 && last < first && fake < sunny,
        format!(
            "{} epochs in {:.1?}; cycle loss first-5 {first:.4} -> last-5 {last:.4}; \
             FID(fake night, night) {fake:.3} vs FID(sunny, night) {sunny:.3}",
            means.len(),
            fx.gan_time
        ),
    )
}

// ---------------------------------------------------------------- 5

fn gradient_check() -> Verdict {
    let start = Instant::now();
    let cfg = GanConfig {
        resolution: 8,
        batch_size: 2,
        base_channels: 2,
        residual_blocks: 1,
        generator: GeneratorKind::Micro,
        discriminator: DiscriminatorKind::Compact,
        ..GanConfig::desk()
    };
    let state = GanTrainState::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut batch = || {
        let data = (0..2 * 3 * 8 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        advaug_core::nn::Tensor::from_vec(2, 3, 8, 8, data)
    };
    let (a, b) = (batch(), batch());
    let obj = generator_objective(&state.models, &cfg, &a, &b).unwrap();
    let mut worst = 0.0f64;
    for k in 0..20 {
        let which_ab = k % 2 == 0;
        let n = if which_ab { state.models.g_ab.param_count() } else { state.models.g_ba.param_count() };
        let i = rng.random_range(0..n);
        let eval = |delta: f64| {
            let mut m = state.models.clone();
            let net = if which_ab { &mut m.g_ab } else { &mut m.g_ba };
            net.params[i] += delta;
            generator_objective(&m, &cfg, &a, &b).unwrap().total_g
        };
        let h = 1e-6;
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        let analytic = if which_ab { obj.grad_g_ab[i] } else { obj.grad_g_ba[i] };
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    let t = start.elapsed();
    verdict(worst <= 1e-3 && t < Duration::from_secs(60), format!("20 parameters, max relative error {worst:.2e}, {t:.2?}"))
}

// ---------------------------------------------------------------- 6

fn label_preservation(fx: &Fixture) -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["fake_night", "fake_droplet"] {
        let report = verify_label_preservation(fx.set("sunny"), fx.set(name));
        ok &= report.preserved;
        lines.push(format!("{name} {}", if report.preserved { "identical" } else { "differs" }));
    }
    verdict(ok, lines.join(", "))
}

// ---------------------------------------------------------------- 7

fn augmentation_effect(fx: &Fixture) -> Verdict {
    let start = Instant::now();
    let sunny = fx.set("sunny");
    let augmented = merge_datasets(&[sunny.clone(), fx.set("fake_night").clone()]).unwrap();
    let test = fx.set("night_test");
    let mut gains = Vec::new();
    for seed in 0..3 {
        let cfg = TrainConfig { epochs: 15, seed, ..TrainConfig::desk() };
        let map = |ds: &Dataset| {
            let model = TinyDetector.train(ds, &cfg).unwrap();
            evaluate(&TinyDetector.predict(&model, test).unwrap(), test, 0.5).unwrap().map
        };
        let (base, aug) = (map(sunny), map(&augmented));
        gains.push((base, aug));
    }
    let total = fx.gan_time + fx.synthesis_time + start.elapsed();
    let ok = gains.iter().all(|(b, a)| a - b >= 0.10) && total < Duration::from_secs(45 * 60);
    let rows: Vec<String> =
        gains.iter().map(|(b, a)| format!("{b:.3}->{a:.3} ({:+.1} pp)", 100.0 * a - 100.0 * b)).collect();
    verdict(ok, format!("night mAP sunny -> sunny+fake_night: {}; full run {total:.1?}", rows.join(", ")))
}

// ---------------------------------------------------------------- 8

fn matrix_bookkeeping(fx: &Fixture) -> Verdict {
    let out = tempfile::tempdir().unwrap();
    let cfg = |name: &str| ExperimentConfig {
        detectors: vec![NoiseOracle::NAME.into(), TinyDetector::NAME.into()],
        datasets: fx.manifests.clone(),
        training_sets: vec![
            "sunny".into(),
            "sunny+fake_night".into(),
            "sunny+fake_droplet".into(),
            "sunny+fake_night+fake_droplet".into(),
        ],
        test_sets: vec!["sunny_test".into(), "night_test".into(), "droplet_test".into()],
        train: TrainConfig { epochs: 2, ..TrainConfig::desk() },
        iou_threshold: 0.5,
        seed: 17,
        output_root: out.path().join(name),
        noise_oracle: Default::default(),
        external: Vec::new(),
        benchmark: None,
        max_parallel: 1,
    };
    let a = run_matrix(&cfg("a")).unwrap();
    let b = run_matrix(&cfg("b")).unwrap();
    let resumed_cfg = cfg("resumed");
    let mut partial_sizes = Vec::new();
    for k in [5, 7] {
        partial_sizes.push(run_matrix_with(&resumed_cfg, &RunOptions { stop_after_cells: Some(k) }).unwrap().cells.len());
    }
    let resumed = run_matrix(&resumed_cfg).unwrap();
    let ok = a.cells.len() == 24 && a.is_complete() && a == b && resumed == a && partial_sizes.iter().all(|&n| n < 24);
    verdict(
        ok,
        format!(
            "{} cells; twin runs identical: {}; interrupted after {partial_sizes:?} cells, resumed identical: {}",
            a.cells.len(),
            a == b,
            resumed == a
        ),
    )
}

// ---------------------------------------------------------------- 9

struct SleepStub {
    delay: Duration,
    slow_calls: usize,
    slow_factor: u32,
    calls: AtomicUsize,
}

impl DetectorAdapter for SleepStub {
    fn name(&self) -> &str {
        "sleep-stub"
    }

    fn train(&self, _ds: &Dataset, cfg: &TrainConfig) -> Result<ModelRef, DetectError> {
        Ok(ModelRef::new("sleep-stub", cfg.clone()))
    }

    fn prepare(&self, _model: &ModelRef, record: &ImageRecord) -> Result<Frame, DetectError> {
        Ok(Frame { image_id: record.id.clone(), pixels: Vec::new(), size: 0, source: None })
    }

    fn infer(&self, _model: &ModelRef, _frame: &Frame) -> Result<Vec<Detection>, DetectError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let factor = if n < self.slow_calls { self.slow_factor } else { 1 };
        std::thread::sleep(self.delay * factor);
        Ok(Vec::new())
    }
}

fn frames(n: usize) -> Dataset {
    let records = (0..n)
        .map(|i| ImageRecord {
            id: format!("f{i}"),
            image_path: Path::new("/nonexistent").join(format!("{i}.png")),
            annotations_path: Path::new("/nonexistent").join(format!("{i}.txt")),
            width: 64,
            height: 64,
            annotations: Vec::new(),
        })
        .collect();
    Dataset::new("frames", Condition::Sunny, cone_class_map(), records).unwrap()
}

fn benchmark_calibration() -> Verdict {
    let fps = |ms: u64, slow_calls: usize, warmup: usize| {
        let stub = SleepStub { delay: Duration::from_millis(ms), slow_calls, slow_factor: 10, calls: AtomicUsize::new(0) };
        let model = stub.train(&frames(1), &TrainConfig::desk()).unwrap();
        let opts = BenchOptions { warmup, ..BenchOptions::default() };
        measure_throughput(&stub, &model, &frames(7), &opts).unwrap().fps
    };
    let steady = fps(100, 0, 10);
    let covered = fps(20, 5, 5);
    let exposed = fps(20, 5, 0);
    let ok = (steady - 10.0).abs() <= 0.5 && (covered - 50.0).abs() <= 2.5 && exposed < 0.8 * covered;
    verdict(
        ok,
        format!("100 ms stub {steady:.3} fps; 5 slow calls with warmup 5: {covered:.2} fps, without warmup: {exposed:.2} fps"),
    )
}

// ---------------------------------------------------------------- driver

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Verdict::Fail(format!("panicked: {msg}"))
    })
}

fn main() {
    // libtest flags such as --nocapture or a filter are accepted and ignored.
    let _ = std::env::args();
    let mut results: Vec<(u8, &str, Verdict)> = vec![
        (1, "metric oracle equivalence", guarded(metric_oracle)),
        (2, "Frechet distance correctness", guarded(frechet)),
        (3, "published-grid delta arithmetic", guarded(published_grid)),
        (5, "micro-generator gradient check", guarded(gradient_check)),
        (9, "benchmark calibration", guarded(benchmark_calibration)),
    ];
    match catch_unwind(build_fixture) {
        Ok(fx) => {
            results.push((4, "translator training sanity", guarded(|| gan_sanity(&fx))));
            results.push((6, "label preservation", guarded(|| label_preservation(&fx))));
            results.push((7, "augmentation effect at desk scale", guarded(|| augmentation_effect(&fx))));
            results.push((8, "matrix bookkeeping", guarded(|| matrix_bookkeeping(&fx))));
        }
        Err(_) => {
            for (id, name) in [(4, "translator training sanity"), (6, "label preservation"), (7, "augmentation effect at desk scale"), (8, "matrix bookkeeping")] {
                results.push((id, name, Verdict::Fail("fixture construction failed".into())));
            }
        }
    }
    results.sort_by_key(|r| r.0);

    let mut failed = false;
    println!();
    for (id, name, v) in &results {
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed = true;
                ("FAIL", d)
            }
            Verdict::PublishedMismatch(d) => ("FAIL", d),
        };
        println!("{tag} criterion {id}: {name}: {detail}");
    }
    let mismatches = results.iter().filter(|r| matches!(r.2, Verdict::PublishedMismatch(_))).count();
    if mismatches > 0 {
        println!("({mismatches} FAIL line(s) above compare verified arithmetic against published figures that its printed inputs do not reproduce)");
    }
    if failed {
        std::process::exit(1);
    }
}
