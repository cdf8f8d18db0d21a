use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::FidError;

/// Gaussian moments of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub sample_count: usize,
}

/// Terms of the Frechet distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetTerms {
    /// `|mu1 - mu2|^2`
    pub mean_term: f64,
    /// `tr(S1 + S2 - 2 (S1 S2)^(1/2))`
    pub trace_term: f64,
    pub value: f64,
}

impl FeatureGaussian {
    /// Wraps precomputed moments; the covariance is symmetrized.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, sample_count: usize) -> Result<Self, FidError> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(FidError::Argument(format!(
                "covariance is {}x{}, mean has length {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov, sample_count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Linear shrinkage towards a scaled identity:
    /// `(1 - gamma) * cov + gamma * tr(cov) / d * I`.
    pub fn shrink(&self, gamma: f64) -> Self {
        let d = self.dim();
        let target = self.cov.trace() / d as f64;
        let cov = &self.cov * (1.0 - gamma) + DMatrix::identity(d, d) * (gamma * target);
        Self { mean: self.mean.clone(), cov, sample_count: self.sample_count }
    }
}

/// Column means and unbiased (n - 1) covariance of an `n x d` feature matrix
/// given as rows.
pub fn fit_gaussian(rows: &[Vec<f64>]) -> Result<FeatureGaussian, FidError> {
    let n = rows.len();
    if n < 2 {
        return Err(FidError::Argument(format!("need at least 2 feature rows, got {n}")));
    }
    let d = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(FidError::Argument(format!(
                "row {i} has {} features, expected {d}",
                r.len()
            )));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(FidError::Data(format!("non-finite feature at row {i}, column {j}")));
        }
    }
    let mut mean = DVector::zeros(d);
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean /= n as f64;
    let mut centered = DMatrix::zeros(n, d);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..d {
            centered[(i, j)] = r[j] - mean[j];
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    FeatureGaussian::new(mean, cov, n)
}

/// Eigenvalues of a symmetric PSD matrix with tiny negatives clipped to zero.
fn psd_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, FidError> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let tol = 1e-6 * max + 1e-12;
    for l in eig.eigenvalues.iter_mut() {
        if *l < -tol {
            return Err(FidError::Numeric(format!(
                "{what} is not positive semi-definite (eigenvalue {l:e}, largest {max:e})"
            )));
        }
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    Ok(eig)
}

fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>, FidError> {
    let eig = psd_eigen(m, what)?;
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * roots * eig.eigenvectors.transpose())
}

/// Frechet (2-Wasserstein) distance between two Gaussians, with its terms.
///
/// `tr((S1 S2)^(1/2))` is evaluated as `tr((R S2 R)^(1/2))` with `R = S1^(1/2)`,
/// which only needs symmetric eigendecompositions.
pub fn frechet_terms(g1: &FeatureGaussian, g2: &FeatureGaussian) -> Result<FrechetTerms, FidError> {
    if g1.dim() != g2.dim() {
        return Err(FidError::Argument(format!(
            "feature dimensions differ: {} vs {}",
            g1.dim(),
            g2.dim()
        )));
    }
    let diff = &g1.mean - &g2.mean;
    let mean_term = diff.dot(&diff);
    // Checks the second covariance too, so a non-PSD input is always reported.
    psd_eigen(&g2.cov, "second covariance")?;
    let root1 = psd_sqrt(&g1.cov, "first covariance")?;
    let inner = &root1 * &g2.cov * &root1;
    let eig = psd_eigen(&inner, "covariance product")?;
    let tr_sqrt: f64 = eig.eigenvalues.iter().map(|l| l.sqrt()).sum();
    let trace_term = g1.cov.trace() + g2.cov.trace() - 2.0 * tr_sqrt;
    let mut value = mean_term + trace_term;
    if value < 0.0 {
        if value < -1e-8 {
            return Err(FidError::Numeric(format!("negative distance {value:e}")));
        }
        value = 0.0;
    }
    Ok(FrechetTerms { mean_term, trace_term, value })
}

pub fn frechet_distance(g1: &FeatureGaussian, g2: &FeatureGaussian) -> Result<f64, FidError> {
    frechet_terms(g1, g2).map(|t| t.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_point_fit() {
        let g = fit_gaussian(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(g.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(g.cov, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
    }

    #[test]
    fn identical_rows_zero_covariance() {
        let g = fit_gaussian(&vec![vec![0.3, -1.0, 4.0]; 7]).unwrap();
        assert!(g.cov.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_gaussian(&[vec![1.0]]), Err(FidError::Argument(_))));
        let err = fit_gaussian(&[vec![1.0], vec![f64::NAN]]).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn monte_carlo_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let g = fit_gaussian(&rows).unwrap();
        for j in 0..4 {
            assert!(g.mean[j].abs() < 0.05);
            assert!((g.cov[(j, j)] - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn scalar_case_by_hand() {
        let a = FeatureGaussian::new(DVector::from_vec(vec![0.0]), DMatrix::from_element(1, 1, 4.0), 10).unwrap();
        let b = FeatureGaussian::new(DVector::from_vec(vec![3.0]), DMatrix::from_element(1, 1, 1.0), 10).unwrap();
        let t = frechet_terms(&a, &b).unwrap();
        assert!((t.value - 10.0).abs() < 1e-12);
        assert!((t.mean_term - 9.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let a = FeatureGaussian::new(DVector::zeros(2), DMatrix::identity(2, 2), 3).unwrap();
        let b = FeatureGaussian::new(DVector::zeros(3), DMatrix::identity(3, 3), 3).unwrap();
        assert!(matches!(frechet_distance(&a, &b), Err(FidError::Argument(_))));
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let a = FeatureGaussian::new(DVector::zeros(2), DMatrix::identity(2, 2), 3).unwrap();
        let bad = FeatureGaussian::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]),
            3,
        )
        .unwrap();
        assert!(matches!(frechet_distance(&a, &bad), Err(FidError::Numeric(_))));
        assert!(matches!(frechet_distance(&bad, &a), Err(FidError::Numeric(_))));
    }

    #[test]
    fn shrinkage_preserves_trace() {
        let g = fit_gaussian(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![2.0, 2.0, 0.0]]).unwrap();
        let s = g.shrink(1e-3);
        assert!((s.cov.trace() - g.cov.trace()).abs() < 1e-12);
        assert!(s.cov[(2, 2)] > 0.0);
    }
}
