//! Central finite-difference helpers for verifying analytic gradients.
//!
//! These only evaluate a scalar function of a flat parameter vector; they know
//! nothing about any layer's backward pass, which keeps them usable as an
//! independent check.

/// Central difference gradient of `f` at `point` with the given step.
pub fn central_diff<F>(mut f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; point.len()];
    let mut work = point.to_vec();
    for k in 0..point.len() {
        let orig = work[k];
        work[k] = orig + step;
        let up = f(&work);
        work[k] = orig - step;
        let down = f(&work);
        work[k] = orig;
        grad[k] = (up - down) / (2.0 * step);
    }
    grad
}

/// True when `analytic` agrees with `numeric` at the given relative tolerance;
/// an absolute floor covers entries that are numerically zero.
pub fn grads_close(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_tol: f64) -> bool {
    analytic.len() == numeric.len()
        && analytic.iter().zip(numeric.iter()).all(|(&a, &n)| {
            let diff = (a - n).abs();
            diff <= abs_tol || diff <= rel_tol * a.abs().max(n.abs())
        })
}

/// Worst relative deviation between two gradient vectors, for diagnostics.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], abs_floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| {
            let diff = (a - n).abs();
            if diff <= abs_floor {
                0.0
            } else {
                diff / a.abs().max(n.abs()).max(abs_floor)
            }
        })
        .fold(0.0, f64::max)
}
