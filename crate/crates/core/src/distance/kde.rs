//! Gaussian kernel density mode estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_RESAMPLE_COUNT: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;

/// Grid half-width beyond the sample range, in bandwidths.
const GRID_CUT: f64 = 3.0;
/// Kernel contributions beyond this many bandwidths (< 1e-17 of the kernel
/// peak) are not accumulated.
const KERNEL_SUPPORT: f64 = 9.0;
/// Lower bound of the degenerate-sample bandwidth, meters.
const MIN_BANDWIDTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// Fixed bandwidth in meters.
    Fixed(f64),
    /// Silverman's rule of thumb, robust `min(sd, IQR / 1.34)` form.
    Silverman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
    pub grid_points: usize,
    pub resample_count: usize,
    pub rng_seed: u64,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig {
            bandwidth: Bandwidth::Silverman,
            grid_points: DEFAULT_GRID_POINTS,
            resample_count: DEFAULT_RESAMPLE_COUNT,
            rng_seed: DEFAULT_SEED,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::ConfigInvalid("kde grid needs at least 2 points".into()));
        }
        if self.resample_count < 1 {
            return Err(Error::ConfigInvalid("resample count must be >= 1".into()));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::ConfigInvalid(format!(
                    "fixed bandwidth must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }

    fn bandwidth_for(&self, sorted: &[f64]) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(h) => Ok(h),
            Bandwidth::Silverman => silverman_sorted(sorted),
        }
    }
}

/// Quantile by linear interpolation between order statistics
/// (position `p * (n - 1)`). `sorted` must be non-empty and ascending.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted_copy(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Silverman's rule: `h = 0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// `sd` uses the `n - 1` denominator. When the IQR is zero but the spread is
/// not, `sd` alone is used. When all samples are equal the bandwidth falls
/// back to `max(1e-6, 0.001 * |value|)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    silverman_sorted(&sorted_copy(samples))
}

fn silverman_sorted(sorted: &[f64]) -> Result<f64> {
    let n = sorted.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let mut spread = sd.min(iqr / 1.34);
    if spread <= 0.0 {
        spread = sd;
    }
    if spread <= 0.0 {
        return Ok(MIN_BANDWIDTH.max(0.001 * sorted[0].abs()));
    }
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Gaussian density of the (sorted) samples on `grid_points` evenly spaced
/// points over `[min - 3h, max + 3h]`. Returns `(grid_start, step, density)`.
///
/// Each sample contributes to grid points within `KERNEL_SUPPORT * h`; the
/// kernel values along the grid are produced by the exact multiplicative
/// recurrence `k(i+1) = k(i) * r(i)`, `r(i+1) = r(i) * q` with
/// `q = exp(-step^2 / h^2)`, seeded by one `exp` at the nearest grid point.
pub(crate) fn density_on_grid(sorted: &[f64], h: f64, grid_points: usize) -> (f64, f64, Vec<f64>) {
    let lo = sorted[0] - GRID_CUT * h;
    let hi = sorted[sorted.len() - 1] + GRID_CUT * h;
    let last = grid_points - 1;
    let step = (hi - lo) / last as f64;
    let grid = |i: usize| lo + i as f64 * step;
    let mut dens = vec![0.0; grid_points];

    let inv_2h2 = 0.5 / (h * h);
    let q = (-2.0 * step * step * inv_2h2).exp();
    let reach = ((KERNEL_SUPPORT * h / step).ceil() as usize).min(last);
    let mut tail = vec![0.0; reach];

    let mut i = 0;
    while i < sorted.len() {
        // collapse runs of equal samples into one weighted kernel
        let x = sorted[i];
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let weight = (j - i) as f64;
        i = j;

        let center = (((x - lo) / step).round() as usize).min(last);
        let dc = grid(center) - x;
        let k0 = weight * (-dc * dc * inv_2h2).exp();
        dens[center] += k0;

        let right = (center + reach).min(last) - center;
        kernel_tail(&mut tail[..right], k0, (-(2.0 * dc + step) * step * inv_2h2).exp(), q);
        for (d, t) in dens[center + 1..].iter_mut().zip(&tail[..right]) {
            *d += t;
        }
        let left = center.min(reach);
        kernel_tail(&mut tail[..left], k0, (-(-2.0 * dc + step) * step * inv_2h2).exp(), q);
        for (d, t) in dens[..center].iter_mut().rev().zip(&tail[..left]) {
            *d += t;
        }
    }
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    dens.iter_mut().for_each(|d| *d *= norm);
    (lo, step, dens)
}

/// Writes `k(1), k(2), ...` of `k(t+1) = k(t) * r(t)`, `r(t+1) = r(t) * q`
/// into `out`. Four interleaved lanes advance by four steps at a time
/// (multiplier `r(t) r(t+1) r(t+2) r(t+3)`, itself scaled by `q^16`).
fn kernel_tail(out: &mut [f64], k0: f64, r0: f64, q: f64) {
    let mut r = [0.0; 8];
    r[0] = r0;
    for t in 1..8 {
        r[t] = r[t - 1] * q;
    }
    let mut k = [0.0; 4];
    let mut prev = k0;
    for l in 0..4 {
        prev *= r[l];
        k[l] = prev;
    }
    let mut step = [0.0; 4];
    for l in 0..4 {
        step[l] = r[l + 1] * r[l + 2] * r[l + 3] * r[l + 4];
    }
    let q16 = {
        let q2 = q * q;
        let q4 = q2 * q2;
        let q8 = q4 * q4;
        q8 * q8
    };
    for chunk in out.chunks_mut(4) {
        for (l, o) in chunk.iter_mut().enumerate() {
            *o = k[l];
            k[l] *= step[l];
            step[l] *= q16;
        }
    }
}

fn grid_mode(sorted: &[f64], h: f64, grid_points: usize) -> f64 {
    if sorted[0] == sorted[sorted.len() - 1] {
        return sorted[0];
    }
    let (lo, step, dens) = density_on_grid(sorted, h, grid_points);
    let mut best = 0;
    for (i, &d) in dens.iter().enumerate().skip(1) {
        if d > dens[best] {
            best = i;
        }
    }
    lo + best as f64 * step
}

/// Location of the highest density grid point of a Gaussian KDE.
///
/// Ties go to the smallest grid value. If every sample has the same value
/// (including the single-sample case) that value is returned.
pub fn kde_estimate(samples: &[f64], cfg: &KdeConfig) -> Result<f64> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let sorted = sorted_copy(samples);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Ok(sorted[0]);
    }
    let h = cfg.bandwidth_for(&sorted)?;
    Ok(grid_mode(&sorted, h, cfg.grid_points))
}

/// KDE mode of a synthetic sample drawn from the fitted KDE.
///
/// Draws `resample_count` points, each a uniformly chosen sample plus
/// `N(0, h)` noise, then refits a KDE (same bandwidth rule) on the draws and
/// returns its grid mode. The generator is seeded from `rng_seed` on every
/// call.
pub fn resampled_kde_estimate(samples: &[f64], cfg: &KdeConfig) -> Result<f64> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let sorted = sorted_copy(samples);
    let h = if sorted.len() == 1 {
        match cfg.bandwidth {
            Bandwidth::Fixed(h) => h,
            Bandwidth::Silverman => MIN_BANDWIDTH.max(0.001 * sorted[0].abs()),
        }
    } else {
        cfg.bandwidth_for(&sorted)?
    };
    let mut rng = Rng::new(cfg.rng_seed);
    let draws: Vec<f64> = (0..cfg.resample_count)
        .map(|_| samples[rng.next_index(samples.len())] + h * rng.next_gaussian())
        .collect();
    let draws = sorted_copy(&draws);
    if draws[0] == draws[draws.len() - 1] {
        return Ok(draws[0]);
    }
    let h2 = cfg.bandwidth_for(&draws)?;
    Ok(grid_mode(&draws, h2, cfg.grid_points))
}

/// Bandwidth the estimators use for these samples under `cfg`.
pub fn bandwidth(samples: &[f64], cfg: &KdeConfig) -> Result<f64> {
    match (cfg.bandwidth, samples.len()) {
        (_, 0) => Err(Error::EmptySamples),
        (Bandwidth::Fixed(h), _) => Ok(h),
        (Bandwidth::Silverman, 1) => Ok(MIN_BANDWIDTH.max(0.001 * samples[0].abs())),
        (Bandwidth::Silverman, _) => silverman_bandwidth(samples),
    }
}
