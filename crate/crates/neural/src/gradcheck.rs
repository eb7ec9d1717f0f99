//! Central finite-difference gradients for verifying the reverse pass.

/// Central differences of `loss` with respect to every entry of `params`.
/// The actual perturbation (after rounding) is used as the denominator.
pub fn numeric_gradient<F>(params: &mut [f64], step: f64, mut loss: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            let hi = orig + step;
            let lo = orig - step;
            params[i] = hi;
            let fh = loss(params);
            params[i] = lo;
            let fl = loss(params);
            params[i] = orig;
            (fh - fl) / (hi - lo)
        })
        .collect()
}

/// Like [`numeric_gradient`] for piecewise-smooth losses: `loss` also
/// reports its activation pattern, and coordinates whose perturbation
/// changes the pattern (a kink lies inside the step) come back as `None`.
pub fn numeric_gradient_smooth<F>(params: &mut [f64], step: f64, mut loss: F) -> Vec<Option<f64>>
where
    F: FnMut(&[f64]) -> (f64, Vec<bool>),
{
    let (_, base) = loss(params);
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            let hi = orig + step;
            let lo = orig - step;
            params[i] = hi;
            let (fh, ph) = loss(params);
            params[i] = lo;
            let (fl, pl) = loss(params);
            params[i] = orig;
            (ph == base && pl == base).then(|| (fh - fl) / (hi - lo))
        })
        .collect()
}

/// Relative error over the coordinates where a numeric value exists, and
/// the number of coordinates compared.
pub fn masked_relative_error(analytic: &[f64], numeric: &[Option<f64>]) -> (f64, usize) {
    let (a, n): (Vec<f64>, Vec<f64>) = analytic
        .iter()
        .zip(numeric)
        .filter_map(|(a, n)| n.map(|n| (*a, n)))
        .unzip();
    (relative_error(&a, &n), a.len())
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference norm when both
/// are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}
