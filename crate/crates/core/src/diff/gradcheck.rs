use super::{DiffError, Tensor};

/// Central-difference gradient of a scalar function, one coordinate at a time.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor<f64>, eps: f64) -> Result<Tensor<f64>, DiffError>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[k] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(DiffError::NonFinite(k));
        }
        grad.data_mut()[k] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Max-norm relative error `max|a - b| / max(max|a|, max|b|)`; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// [`relative_error`], falling back to the absolute gap when both gradients are
/// below `1e-7` (e.g. a bias feeding batch normalization, whose true gradient is zero).
pub fn gradient_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale < 1e-7 {
        a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    } else {
        relative_error(a, b)
    }
}
