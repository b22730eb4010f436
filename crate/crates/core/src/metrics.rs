//! Error measures shared by the decomposition and the forecasters.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::fmath;

fn norm(xs: impl Iterator<Item = f64>) -> f64 {
    fmath::sqrt(xs.map(|x| x * x).sum())
}

/// Relative error `||pred - truth|| / ||truth||` in the Euclidean norm.
pub fn rrmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(invalid!("length mismatch: {} vs {}", pred.len(), truth.len()));
    }
    let denom = norm(truth.iter().copied());
    if denom == 0.0 {
        return Err(Error::UndefinedRelativeError);
    }
    Ok(norm(pred.iter().zip(truth).map(|(p, t)| p - t)) / denom)
}

/// Batch loss `||pred - truth||^2 / m`.
pub fn mse_local(pred: &[f64], truth: &[f64], m: usize) -> Result<f64> {
    if m == 0 {
        return Err(invalid!("batch size must be positive"));
    }
    if pred.len() != truth.len() {
        return Err(invalid!("length mismatch: {} vs {}", pred.len(), truth.len()));
    }
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sq / m as f64)
}

/// Mean of the local losses.
pub fn mse_global(locals: &[f64], k_alpha: usize) -> Result<f64> {
    if locals.is_empty() || k_alpha == 0 {
        return Err(invalid!("global loss needs at least one local loss"));
    }
    if k_alpha != locals.len() {
        return Err(invalid!("k_alpha = {k_alpha} but {} local losses given", locals.len()));
    }
    Ok(locals.iter().sum::<f64>() / k_alpha as f64)
}

/// Per-index errors with their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub values: Vec<f64>,
}

impl ErrorSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation("error values must be finite and non-negative".into()));
        }
        Ok(Self { values })
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rrmse_identities() {
        let v = [1.0, -2.0, 3.0];
        assert_eq!(rrmse(&v, &v).unwrap(), 0.0);
        assert_eq!(rrmse(&[0.0; 3], &v).unwrap(), 1.0);
        assert_eq!(rrmse(&v, &[0.0; 3]), Err(Error::UndefinedRelativeError));
        assert!(rrmse(&v, &[1.0]).is_err());
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse_local(&[1.0, 2.0], &[1.0, 2.0], 1).unwrap(), 0.0);
        assert_eq!(mse_local(&[2.0], &[0.0], 1).unwrap(), 4.0);
        assert!(mse_local(&[2.0], &[0.0], 0).is_err());
        assert_eq!(mse_global(&[5.0], 1).unwrap(), 5.0);
        assert_eq!(mse_global(&[1.0, 3.0], 2).unwrap(), 2.0);
        assert!(mse_global(&[], 0).is_err());
    }

    #[test]
    fn error_series_mean() {
        let s = ErrorSeries::new(vec![0.1, 0.3]).unwrap();
        assert!((s.mean() - 0.2).abs() < 1e-16);
        assert!(ErrorSeries::new(vec![-1.0]).is_err());
    }
}
