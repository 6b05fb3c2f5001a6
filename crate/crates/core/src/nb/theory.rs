/// Expected shrinkage of the unpaired one-step slope for a binary predictor
/// with true slope `beta`: `-2 + 4 e^beta / (1 + e^beta) - beta`.
pub fn shrinkage_curve(beta: f64) -> f64 {
    -2.0 + 4.0 / (1.0 + (-beta).exp()) - beta
}

/// Cubic approximation to `E[p~ - p]` after `n` observations with `x = 1`.
pub fn generalisation_error(n: f64, p: f64) -> f64 {
    let (p2, p3, n2) = (p * p, p * p * p, n * n);
    let poly = 8.0 * n2 * p3 - 12.0 * n2 * p2 + 6.0 * n2 * p - n2 - 24.0 * n * p3 + 36.0 * n * p2 - 12.0 * n * p
        + 16.0 * p3
        - 24.0 * p2
        + 8.0 * p;
    -poly / (6.0 * n2)
}

/// Limit of [`generalisation_error`] as `n` grows: `-(2p - 1)^3 / 6`.
pub fn asymptote(p: f64) -> f64 {
    -(2.0 * p - 1.0).powi(3) / 6.0
}
