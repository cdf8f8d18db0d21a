//! Random Gaussians with closed-form Frechet distances.

use advaug_core::fid::FeatureGaussian;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_vector<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `A A^T + 0.1 I` with Gaussian `A`.
pub fn random_spd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

pub fn random_orthogonal<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    a.qr().q()
}

pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> FeatureGaussian {
    FeatureGaussian::new(mean, cov, 1000).unwrap()
}

/// Diagonal covariances: `|m1 - m2|^2 + sum (sqrt(a_i) - sqrt(b_i))^2`.
pub struct DiagonalCase {
    pub g1: FeatureGaussian,
    pub g2: FeatureGaussian,
    pub expected: f64,
}

pub fn diagonal_case<R: Rng>(rng: &mut R) -> DiagonalCase {
    let d = rng.random_range(1..=8);
    let m1 = random_vector(rng, d);
    let m2 = random_vector(rng, d);
    let a: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..4.0)).collect();
    let b: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..4.0)).collect();
    let expected = (&m1 - &m2).norm_squared()
        + a.iter().zip(&b).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum::<f64>();
    DiagonalCase {
        g1: gaussian(m1, DMatrix::from_diagonal(&DVector::from_vec(a))),
        g2: gaussian(m2, DMatrix::from_diagonal(&DVector::from_vec(b))),
        expected,
    }
}
