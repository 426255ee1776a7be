//! Trapezoidal quadrature on uniform grids.

/// Trapezoidal weights for `n` equally spaced points covering `[0, 1]`.
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let h = 1.0 / (n - 1) as f64;
            let mut w = vec![h; n];
            w[0] = h / 2.0;
            w[n - 1] = h / 2.0;
            w
        }
    }
}

pub fn integrate(weights: &[f64], f: &[f64]) -> f64 {
    weights.iter().zip(f).map(|(w, v)| w * v).sum()
}

pub fn inner(weights: &[f64], f: &[f64], g: &[f64]) -> f64 {
    weights
        .iter()
        .zip(f.iter().zip(g))
        .map(|(w, (a, b))| w * a * b)
        .sum()
}

pub fn norm_sq(weights: &[f64], f: &[f64]) -> f64 {
    inner(weights, f, f)
}
