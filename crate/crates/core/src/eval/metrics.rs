use crate::error::{Error, Result};

/// Sum of squared errors and the number of frames it covers.
pub fn squared_error_sum(predictions: &[f64], truths: &[f64]) -> Result<(f64, usize)> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("no frames to score".into()));
    }
    if predictions.iter().chain(truths).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rmse input"));
    }
    let sse = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse, predictions.len()))
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    let (sse, n) = squared_error_sum(predictions, truths)?;
    Ok((sse / n as f64).sqrt())
}

/// RMSE over every frame of every scene taken as one population.
pub fn pooled_rmse<'a, I>(scenes: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut sse = 0.0;
    let mut n = 0;
    for (p, t) in scenes {
        let (s, k) = squared_error_sum(p, t)?;
        sse += s;
        n += k;
    }
    if n == 0 {
        return Err(Error::Empty("no scenes to score".into()));
    }
    Ok((sse / n as f64).sqrt())
}
