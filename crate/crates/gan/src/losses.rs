//! Loss functions over flat batches. The `*_grad` variants also return the
//! gradient with respect to the first argument.

use crate::GanError;

fn check_shapes(a: &[f64], b: &[f64]) -> Result<(), GanError> {
    if a.len() != b.len() {
        return Err(GanError::Argument(format!("shape mismatch: {} vs {} elements", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(GanError::Argument("empty batch".into()));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn l1_loss(x: &[f64], target: &[f64]) -> Result<f64, GanError> {
    check_shapes(x, target)?;
    Ok(x.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64)
}

pub fn l1_loss_grad(x: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), GanError> {
    let loss = l1_loss(x, target)?;
    let n = x.len() as f64;
    let grad = x
        .iter()
        .zip(target)
        .map(|(a, b)| match a.partial_cmp(b) {
            Some(std::cmp::Ordering::Greater) => 1.0 / n,
            Some(std::cmp::Ordering::Less) => -1.0 / n,
            _ => 0.0,
        })
        .collect();
    Ok((loss, grad))
}

/// Reconstruction loss between an image batch and its round trip.
pub fn cycle_loss(original: &[f64], reconstructed: &[f64]) -> Result<f64, GanError> {
    l1_loss(reconstructed, original)
}

/// Penalty for a generator altering an image already in its output domain.
pub fn identity_loss(original: &[f64], same_domain_mapped: &[f64]) -> Result<f64, GanError> {
    l1_loss(same_domain_mapped, original)
}

/// Least-squares adversarial loss `mean((s - t)^2)`.
pub fn adversarial_loss(scores: &[f64], target_is_real: bool) -> Result<f64, GanError> {
    adversarial_loss_grad(scores, target_is_real).map(|(l, _)| l)
}

pub fn adversarial_loss_grad(scores: &[f64], target_is_real: bool) -> Result<(f64, Vec<f64>), GanError> {
    if scores.is_empty() {
        return Err(GanError::Argument("empty score map".into()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(GanError::Numeric(format!("non-finite discriminator score at index {i}")));
    }
    let t = if target_is_real { 1.0 } else { 0.0 };
    let n = scores.len() as f64;
    let loss = scores.iter().map(|s| (s - t) * (s - t)).sum::<f64>() / n;
    let grad = scores.iter().map(|s| 2.0 * (s - t) / n).collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        let x = vec![0.25, -0.5, 0.75, 0.0];
        assert_eq!(cycle_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(identity_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(cycle_loss(&[0.0; 6], &[1.0; 6]).unwrap(), 1.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.5).collect();
        assert_eq!(cycle_loss(&x, &shifted).unwrap(), 0.5);
        let plus_one: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        assert_eq!(identity_loss(&x, &plus_one).unwrap(), 1.0);
        assert_eq!(adversarial_loss(&[1.0; 4], true).unwrap(), 0.0);
        assert_eq!(adversarial_loss(&[0.5; 4], true).unwrap(), 0.25);
        assert_eq!(adversarial_loss(&[0.5; 4], false).unwrap(), 0.25);
    }

    #[test]
    fn errors() {
        assert!(matches!(cycle_loss(&[0.0; 3], &[0.0; 4]), Err(GanError::Argument(_))));
        assert!(matches!(adversarial_loss(&[f64::NAN], true), Err(GanError::Numeric(_))));
    }

    proptest! {
        #[test]
        fn losses_are_non_negative(v in prop::collection::vec(-3.0f64..3.0, 1..40), real in any::<bool>()) {
            let w: Vec<f64> = v.iter().rev().cloned().collect();
            prop_assert!(cycle_loss(&v, &w).unwrap() >= 0.0);
            prop_assert!(adversarial_loss(&v, real).unwrap() >= 0.0);
        }

        #[test]
        fn adversarial_gradient_matches_difference(v in prop::collection::vec(-2.0f64..2.0, 1..10), real in any::<bool>()) {
            let (_, g) = adversarial_loss_grad(&v, real).unwrap();
            for i in 0..v.len() {
                let h = 1e-6;
                let mut up = v.clone();
                up[i] += h;
                let mut down = v.clone();
                down[i] -= h;
                let num = (adversarial_loss(&up, real).unwrap() - adversarial_loss(&down, real).unwrap()) / (2.0 * h);
                prop_assert!((num - g[i]).abs() < 1e-6);
            }
        }
    }
}
