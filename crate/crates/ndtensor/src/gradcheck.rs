//! Central finite differences for gradient verification.
//!
//! The checker only evaluates the function under test, never its backward
//! pass, so it stays an independent oracle for the tape's gradients.

/// Central-difference gradient of `f` at `theta` with the given step.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(theta: &[f64], mut f: F, step: f64) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let plus = f(&probe);
        probe[i] = theta[i] - step;
        let minus = f(&probe);
        probe[i] = theta[i];
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Worst relative disagreement between two gradient vectors.
///
/// Entries where both sides are below `1e-7` in magnitude count as exact:
/// at that scale central differences are dominated by cancellation noise.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let denom = a.abs().max(n.abs());
            if denom < 1e-7 {
                0.0
            } else {
                (a - n).abs() / denom
            }
        })
        .fold(0.0, f64::max)
}
