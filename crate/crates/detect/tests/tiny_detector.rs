use advaug_core::deteval::evaluate;
use advaug_core::scenes::{generate_scenes, SceneConfig, SceneStyle};
use advaug_detect::{DetectorAdapter, FlopReport, TinyDetector, TrainConfig};

#[test]
fn learns_cones_on_synthetic_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let train_cfg = SceneConfig { count: 160, seed: 21, ..SceneConfig::default() };
    let test_cfg = SceneConfig { count: 40, seed: 22, ..SceneConfig::default() };
    let (train, _) = generate_scenes(&train_cfg, SceneStyle::Sunny, "train", &dir.path().join("train")).unwrap();
    let (test, _) = generate_scenes(&test_cfg, SceneStyle::Sunny, "test", &dir.path().join("test")).unwrap();

    let cfg = TrainConfig { epochs: 15, ..TrainConfig::desk() };
    let t0 = std::time::Instant::now();
    let model = TinyDetector.train(&train, &cfg).unwrap();
    let untrained = TinyDetector.train_untrained(&cfg);
    let eval = |m| evaluate(&TinyDetector.predict(m, &test).unwrap(), &test, 0.5).unwrap().map;
    let (before, after) = (eval(&untrained), eval(&model));
    eprintln!("map before {before:.3} after {after:.3} in {:?}", t0.elapsed());
    assert!(after > 0.5, "trained mAP {after}");
    assert!(after > before + 0.3);
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = SceneConfig { count: 12, ..SceneConfig::default() };
    let (ds, _) = generate_scenes(&scenes, SceneStyle::Sunny, "d", dir.path()).unwrap();
    let cfg = TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::desk() };
    let a = TinyDetector.train(&ds, &cfg).unwrap();
    let b = TinyDetector.train(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    let c = TinyDetector.train(&ds, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn flops_follow_the_layer_walk() {
    let model = TinyDetector.train_untrained(&TrainConfig::desk());
    // 2*k*k*cin*cout*hout*wout per convolution at a 64 px input.
    let expected: u64 = [
        (3, 16, 3, 32),
        (16, 32, 3, 16),
        (32, 48, 3, 8),
        (48, 48, 3, 8),
        (48, 7, 1, 8),
    ]
    .iter()
    .map(|&(cin, cout, k, s): &(u64, u64, u64, u64)| 2 * k * k * cin * cout * s * s)
    .sum();
    assert_eq!(TinyDetector.flops(&model), FlopReport::Computed(expected));
    assert_eq!(TinyDetector.parameter_count(&model), Some(model.params.len() as u64));
}
