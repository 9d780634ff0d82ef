//! Central finite-difference gradient checking.
//!
//! The checks here build their reference gradients from forward evaluations
//! only, so they stay independent of the backward implementations they
//! verify. Intended for `f64`.

/// Central finite differences of a scalar function at `x` with step `h`.
pub fn finite_difference_grad<Func>(mut f: Func, x: &[f64], h: f64) -> Vec<f64>
where
    Func: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Largest elementwise relative error between two gradients:
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
