//! Central finite differences with kink detection, for checking analytic
//! gradients of piecewise-smooth functions.

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` at `x`, or `None` when a kink is detected
/// inside the stencil. A kink shows up as disagreement between the
/// estimates at step `h` and `h / 2`, which agree to O(h²) on smooth pieces.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64, tol: f64) -> Option<f64> {
    let c = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let full = c(h);
    let half = c(h / 2.0);
    if relative_error(full, half, 1e-6) > tol / 4.0 {
        None
    } else {
        Some(full)
    }
}

/// Relative error between two gradient vectors, measured norm-wise.
pub fn relative_error_vec(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_functions_pass() {
        let d = central_difference(|x| x.sin() * x * x, 0.7, 1e-4, 1e-4).unwrap();
        let exact = 0.7f64.cos() * 0.49 + 2.0 * 0.7 * 0.7f64.sin();
        assert!(relative_error(d, exact, 1e-12) < 1e-7);
    }

    #[test]
    fn kinks_are_flagged() {
        assert!(central_difference(|x| x.abs(), 2e-5, 1e-4, 1e-4).is_none());
        assert!(central_difference(|x| x.max(0.0), 0.3, 1e-4, 1e-4).is_some());
    }
}
