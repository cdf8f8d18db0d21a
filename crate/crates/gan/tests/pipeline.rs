use std::fs;
use std::path::Path;

use advaug_core::dataset::{Condition, Dataset};
use advaug_core::scenes::{generate_scenes, SceneConfig, SceneStyle};
use advaug_gan::{
    load_checkpoint, resume, synthesize_dataset, train, verify_label_preservation, Direction, GanConfig, GanError,
    ResizePolicy, SynthesisJob,
};

fn scenes(root: &Path, name: &str, style: SceneStyle, seed: u64) -> Dataset {
    let cfg = SceneConfig { count: 6, seed, width: 32, height: 24, ..SceneConfig::default() };
    generate_scenes(&cfg, style, name, &root.join(name)).unwrap().0
}

fn small() -> GanConfig {
    GanConfig { resolution: 16, batch_size: 2, base_channels: 4, residual_blocks: 1, epochs: 3, seed: 4, ..GanConfig::desk() }
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let a = scenes(dir.path(), "a", SceneStyle::Sunny, 1);
    let b = scenes(dir.path(), "b", SceneStyle::Night, 2);

    let full = train(&small(), &a, &b, &dir.path().join("full")).unwrap();
    let first = train(&GanConfig { epochs: 1, ..small() }, &a, &b, &dir.path().join("part")).unwrap();
    let resumed = resume(&first.path, 3, &a, &b, &dir.path().join("resumed")).unwrap();

    assert_eq!(resumed.epoch, 3);
    assert_eq!(resumed.id, full.id);
    let (x, y) = (load_checkpoint(&full.path).unwrap(), load_checkpoint(&resumed.path).unwrap());
    assert_eq!(x.models, y.models);
    assert_eq!(x.history, y.history);
    assert_eq!(x.step, y.step);
}

#[test]
fn synthesis_keeps_labels_and_records_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let a = scenes(dir.path(), "a", SceneStyle::Sunny, 1);
    let b = scenes(dir.path(), "b", SceneStyle::Night, 2);
    let ck = train(&GanConfig { epochs: 1, ..small() }, &a, &b, &dir.path().join("gan")).unwrap();

    let job = SynthesisJob {
        checkpoint: ck.path.clone(),
        direction: Direction::AToB,
        source: a.clone(),
        target_condition: Condition::FakeNight,
        output_root: dir.path().join("fake"),
        name: "fake_night".into(),
        resize: ResizePolicy::Bilinear,
    };
    let fake = synthesize_dataset(&job).unwrap();
    assert_eq!(fake.condition(), Condition::FakeNight);
    assert_eq!(fake.len(), a.len());
    assert!(verify_label_preservation(&a, &fake).preserved);
    for (src, out) in a.records().iter().zip(fake.records()) {
        assert_eq!((src.width, src.height), (out.width, out.height));
        assert_ne!(fs::read(&src.image_path).unwrap(), fs::read(&out.image_path).unwrap());
    }
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(job.output_root.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["checkpoint_id"], ck.id.as_str());
    assert_eq!(prov["resize_policy"], "bilinear");

    // A tampered label file is detected.
    let victim = &fake.records()[0].annotations_path;
    fs::write(victim, "0 0.5 0.5 0.1 0.1\n").unwrap();
    let report = verify_label_preservation(&a, &fake);
    assert!(!report.preserved);
    assert_eq!(report.differing, vec![fake.records()[0].id.clone()]);

    let exact = SynthesisJob { resize: ResizePolicy::RequireExact, output_root: dir.path().join("exact"), ..job };
    assert!(matches!(synthesize_dataset(&exact), Err(GanError::Config(_))));
    assert!(!dir.path().join("exact").exists());
}
