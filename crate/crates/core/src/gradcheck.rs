//! Central finite-difference gradient oracle.
//!
//! Used by tests to verify every analytic gradient in the crate. The oracle
//! only calls the loss forward path, so it stays independent of backprop.

/// Central differences (f(p+h) - f(p-h)) / (2h), one coordinate at a time.
pub fn central_difference<F>(mut f: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut work = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let plus = f(&work);
        work[i] = orig - h;
        let minus = f(&work);
        work[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Max over components of |a - n| / max(|a|, |n|); components where both
/// magnitudes fall below `floor` count as exact.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < floor {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_recovered() {
        // f(p) = sum p_i^2 has gradient 2p, and central differences are exact
        // for quadratics up to rounding.
        let params = vec![0.5, -1.5, 2.0];
        let grad = central_difference(|p| p.iter().map(|v| v * v).sum(), &params, 1e-4);
        let expected: Vec<f64> = params.iter().map(|v| 2.0 * v).collect();
        assert!(max_relative_error(&grad, &expected, 1e-12) < 1e-9);
    }

    #[test]
    fn floor_suppresses_noise_on_zero_gradients(){
        let a = vec![0.0, 1.0];
        let n = vec![1e-12, 1.0];
        assert_eq!(max_relative_error(&a, &n, 1e-8), 0.0);
    }
}
