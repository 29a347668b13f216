//! Convergence measures.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("reference objective must be positive, got {0}")]
pub struct NonPositiveReference(pub f64);

/// Relative objective gap `|f − f*| / f*`.
pub fn metric_rel(f: f64, f_star: f64) -> Result<f64, NonPositiveReference> {
    if !(f_star > 0.0) {
        return Err(NonPositiveReference(f_star));
    }
    Ok((f - f_star).abs() / f_star)
}

/// Sum of absolute bus balance residuals.
pub fn metric_res(residuals: &[f64]) -> f64 {
    residuals.iter().map(|g| g.abs()).sum()
}
