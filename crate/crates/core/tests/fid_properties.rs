mod support {
    pub mod fid_cases;
}

use advaug_core::fid::{fit_gaussian, frechet_distance, frechet_terms};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::fid_cases::*;

#[test]
fn identical_feature_sets_have_zero_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in [1, 4, 16, 64] {
        let rows: Vec<Vec<f64>> = (0..200).map(|_| random_vector(&mut rng, d).as_slice().to_vec()).collect();
        let g = fit_gaussian(&rows).unwrap();
        assert!(frechet_distance(&g, &g.clone()).unwrap().abs() <= 1e-6, "d = {d}");
    }
}

#[test]
fn equal_covariances_leave_mean_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let d = rng.random_range(1..=10);
        let cov = random_spd(&mut rng, d);
        let (m1, m2) = (random_vector(&mut rng, d), random_vector(&mut rng, d));
        let expected = (&m1 - &m2).norm_squared();
        let t = frechet_terms(&gaussian(m1, cov.clone()), &gaussian(m2, cov)).unwrap();
        assert!((t.value - expected).abs() <= 1e-8, "{} vs {expected}", t.value);
        assert!(t.trace_term.abs() <= 1e-8);
    }
}

#[test]
fn diagonal_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..100 {
        let c = diagonal_case(&mut rng);
        let got = frechet_distance(&c.g1, &c.g2).unwrap();
        assert!((got - c.expected).abs() <= 1e-8, "case {i}: {got} vs {}", c.expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_rotation_invariant(seed in any::<u64>(), d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m1, m2) = (random_vector(&mut rng, d), random_vector(&mut rng, d));
        let (s1, s2) = (random_spd(&mut rng, d), random_spd(&mut rng, d));
        let q = random_orthogonal(&mut rng, d);
        let base = frechet_distance(&gaussian(m1.clone(), s1.clone()), &gaussian(m2.clone(), s2.clone())).unwrap();
        let swapped = frechet_distance(&gaussian(m2.clone(), s2.clone()), &gaussian(m1.clone(), s1.clone())).unwrap();
        let rotated = frechet_distance(
            &gaussian(&q * m1, &q * s1 * q.transpose()),
            &gaussian(&q * m2, &q * s2 * q.transpose()),
        )
        .unwrap();
        let tol = 1e-8 * base.max(1.0);
        prop_assert!(base >= 0.0);
        prop_assert!((base - swapped).abs() <= tol, "{} vs {}", base, swapped);
        prop_assert!((base - rotated).abs() <= tol, "{} vs {}", base, rotated);
    }
}
