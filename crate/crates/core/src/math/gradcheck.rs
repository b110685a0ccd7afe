//! Central finite-difference gradient checking.

use super::tensor::Vector;
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vector,
    pub numeric: Vector,
    /// `|a - n| / max(1, |a| + |n|)` per coordinate.
    pub relative_errors: Vec<f64>,
    /// Coordinates whose relative error exceeds the tolerance.
    pub failures: Vec<usize>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Central differences of `f` around `theta`.
pub fn numeric_gradient<F>(mut f: F, theta: &Vector, eps: f64) -> Result<Vector>
where
    F: FnMut(&Vector) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let mut probe = theta.clone();
    let mut grad = Vector::zeros(theta.len());
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe)?;
        probe[i] = orig - eps;
        let minus = f(&probe)?;
        probe[i] = orig;
        for value in [plus, minus] {
            if !value.is_finite() {
                return Err(Error::Numeric {
                    coordinate: i,
                    value,
                });
            }
        }
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Compares an analytic gradient of `f` at `theta` against central differences.
pub fn grad_check<F>(f: F, analytic: &Vector, theta: &Vector, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&Vector) -> Result<f64>,
{
    if analytic.len() != theta.len() {
        return Err(Error::shape("grad_check", analytic.shape_str(), theta.shape_str()));
    }
    let numeric = numeric_gradient(f, theta, eps)?;
    let relative_errors: Vec<f64> = analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / f64::max(1.0, a.abs() + n.abs()))
        .collect();
    let failures = relative_errors
        .iter()
        .enumerate()
        .filter(|(_, &e)| !(e <= tol))
        .map(|(i, _)| i)
        .collect();
    Ok(GradCheckReport {
        analytic: analytic.clone(),
        numeric,
        relative_errors,
        failures,
        tol,
    })
}
