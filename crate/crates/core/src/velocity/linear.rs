//! Ordinary least squares with intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.coefficients.len() {
            return Err(Error::FeatureLengthMismatch {
                expected: self.coefficients.len(),
                got: features.len(),
            });
        }
        Ok(self.intercept
            + self
                .coefficients
                .iter()
                .zip(features)
                .map(|(c, x)| c * x)
                .sum::<f64>())
    }
}

/// Least-squares fit on mean-centered data. Rank-deficient or
/// underdetermined systems get the minimum-norm coefficient vector (singular
/// values below `max_sv * max(rows, cols) * eps` are treated as zero).
pub fn train_linear(features: &[Vec<f64>], targets: &[f64]) -> Result<LinearModel> {
    let n = features.len();
    if n != targets.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: targets.len(),
        });
    }
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let p = features[0].len();
    if let Some(row) = features.iter().find(|r| r.len() != p) {
        return Err(Error::FeatureLengthMismatch {
            expected: p,
            got: row.len(),
        });
    }
    if targets.iter().chain(features.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear training data"));
    }

    let y_mean = targets.iter().sum::<f64>() / n as f64;
    if p == 0 {
        return Ok(LinearModel {
            coefficients: Vec::new(),
            intercept: y_mean,
        });
    }
    let x_mean: Vec<f64> = (0..p)
        .map(|j| features.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let x = DMatrix::from_fn(n, p, |i, j| features[i][j] - x_mean[j]);
    let y = DVector::from_fn(n, |i, _| targets[i] - y_mean);

    let svd = x.svd(true, true);
    let max_sv = svd.singular_values.max();
    let coefficients: Vec<f64> = if max_sv == 0.0 {
        vec![0.0; p]
    } else {
        let eps = max_sv * n.max(p) as f64 * f64::EPSILON;
        let beta = svd
            .solve(&y, eps)
            .map_err(|e| Error::ConfigInvalid(format!("least squares failed: {e}")))?;
        beta.iter().copied().collect()
    };
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearModel {
        coefficients,
        intercept,
    })
}
