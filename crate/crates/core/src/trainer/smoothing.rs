use crate::error::{Error, Result};

/// Soft target decaying as `exp(-|c - y| / tau)` away from the true class.
pub fn smooth_labels(y: usize, n_classes: usize, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if y >= n_classes {
        return Err(Error::invalid(format!("label {y} outside 0..{n_classes}")));
    }
    let mut q: Vec<f64> = (0..n_classes)
        .map(|c| (-(c.abs_diff(y) as f64) / tau).exp())
        .collect();
    let z: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= z);
    Ok(q)
}

/// One smoothed target per class, indexed by label.
pub fn smoothing_table(n_classes: usize, tau: f64) -> Result<Vec<Vec<f64>>> {
    (0..n_classes).map(|y| smooth_labels(y, n_classes, tau)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_tau_is_one_hot() {
        let q = smooth_labels(3, 7, 1e-9).unwrap();
        for (c, v) in q.iter().enumerate() {
            let want = if c == 3 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-9);
        }
    }

    #[test]
    fn three_class_values() {
        let q = smooth_labels(0, 3, 1.0).unwrap();
        let z = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
        let direct = [1.0 / z, (-1.0f64).exp() / z, (-2.0f64).exp() / z];
        for i in 0..3 {
            assert!((q[i] - direct[i]).abs() < 1e-12);
        }
        for (got, want) in q.iter().zip([0.66524, 0.24473, 0.09003]) {
            assert!((got - want).abs() < 1e-4);
        }
    }

    #[test]
    fn symmetric_about_center() {
        let q = smooth_labels(5, 11, 2.0).unwrap();
        for d in 1..=5 {
            assert!((q[5 - d] - q[5 + d]).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(smooth_labels(0, 3, 0.0).is_err());
        assert!(smooth_labels(0, 3, -1.0).is_err());
        assert!(smooth_labels(3, 3, 1.0).is_err());
    }
}
