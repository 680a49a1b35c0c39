//! Boxed disparity pixels to a single lead-vehicle distance.
//!
//! Each valid pixel maps to `offset * focal_length / disparity`; the bag of
//! per-pixel distances is then reduced by a histogram mode, a Gaussian KDE
//! mode, or the mode of a KDE refitted on draws from the first KDE.

pub mod kde;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, CameraRig, DisparityMap, Scene};

pub use kde::{
    bandwidth, kde_estimate, resampled_kde_estimate, silverman_bandwidth, Bandwidth, KdeConfig,
};

pub const DEFAULT_MODE_BIN_WIDTH_M: f64 = 0.5;

/// Per-pixel distances inside one box.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSamples {
    pub values: Vec<f64>,
    pub source_box: BoundingBox,
    /// Valid pixels over box area.
    pub valid_fraction: f64,
}

pub fn pixel_distances(
    dmap: &DisparityMap,
    bbox: BoundingBox,
    rig: &CameraRig,
) -> Result<DistanceSamples> {
    bbox.check_fits(dmap.width, dmap.height)?;
    let scale = rig.depth_scale();
    let mut values = Vec::with_capacity(bbox.area());
    for y in bbox.y..bbox.y + bbox.h {
        let row = &dmap.values[y * dmap.width + bbox.x..][..bbox.w];
        values.extend(row.iter().filter(|&&d| d > 0.0).map(|&d| scale / d));
    }
    if values.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let valid_fraction = values.len() as f64 / bbox.area() as f64;
    Ok(DistanceSamples {
        values,
        source_box: bbox,
        valid_fraction,
    })
}

/// Center of the most populated `[k*w, (k+1)*w)` bin; ties go to the nearer bin.
pub fn mode_estimate(samples: &[f64], bin_width_m: f64) -> Result<f64> {
    if !(bin_width_m.is_finite() && bin_width_m > 0.0) {
        return Err(Error::ConfigInvalid(format!(
            "mode bin width must be positive, got {bin_width_m}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in samples {
        *counts.entry((v / bin_width_m).floor() as i64).or_default() += 1;
    }
    // BTreeMap iterates bins in ascending order; keep the first maximum
    let (bin, _) = counts
        .iter()
        .fold((0i64, 0usize), |best, (&k, &c)| if c > best.1 { (k, c) } else { best });
    Ok((bin as f64 + 0.5) * bin_width_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mode,
    Kde,
    Resampled,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Mode, Estimator::Kde, Estimator::Resampled];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Mode => "mode",
            Estimator::Kde => "kde",
            Estimator::Resampled => "resampled",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode" => Ok(Estimator::Mode),
            "kde" => Ok(Estimator::Kde),
            "resampled" | "resampled_kde" => Ok(Estimator::Resampled),
            other => Err(Error::ConfigInvalid(format!(
                "unknown estimator {other:?} (expected mode, kde or resampled)"
            ))),
        }
    }
}

/// Everything the distance stage needs besides the scene and boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    pub estimator: Estimator,
    pub mode_bin_width_m: f64,
    pub kde: KdeConfig,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            estimator: Estimator::Kde,
            mode_bin_width_m: DEFAULT_MODE_BIN_WIDTH_M,
            kde: KdeConfig::default(),
        }
    }
}

impl DistanceConfig {
    pub fn with_estimator(self, estimator: Estimator) -> Self {
        DistanceConfig { estimator, ..self }
    }

    pub fn estimate(&self, samples: &[f64]) -> Result<f64> {
        match self.estimator {
            Estimator::Mode => mode_estimate(samples, self.mode_bin_width_m),
            Estimator::Kde => kde_estimate(samples, &self.kde),
            Estimator::Resampled => resampled_kde_estimate(samples, &self.kde),
        }
    }
}

/// Per-frame distance estimates for a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTrace {
    pub distances_m: Vec<f64>,
    /// Frames whose box had no valid pixel and repeat the previous estimate.
    pub carried: Vec<bool>,
}

/// Runs `pixel_distances` plus the configured aggregator on every frame.
///
/// A frame whose box holds no valid disparity repeats the previous frame's
/// estimate and is flagged; on frame 0 that is an error.
pub fn estimate_distance_trace(
    scene: &Scene,
    boxes: &[BoundingBox],
    cfg: &DistanceConfig,
) -> Result<DistanceTrace> {
    if boxes.len() != scene.len() {
        return Err(Error::LengthMismatch {
            left: boxes.len(),
            right: scene.len(),
        }
        .in_scene(&scene.scene_id, None));
    }
    let mut distances_m = Vec::with_capacity(scene.len());
    let mut carried = Vec::with_capacity(scene.len());
    for (frame, &bbox) in scene.frames.iter().zip(boxes) {
        let ctx = |e: Error| e.in_scene(&scene.scene_id, Some(frame.idx));
        match pixel_distances(&frame.disparity, bbox, &scene.rig) {
            Ok(samples) => {
                distances_m.push(cfg.estimate(&samples.values).map_err(ctx)?);
                carried.push(false);
            }
            Err(Error::NoValidPixels) if !distances_m.is_empty() => {
                distances_m.push(distances_m[distances_m.len() - 1]);
                carried.push(true);
            }
            Err(e) => return Err(ctx(e)),
        }
    }
    Ok(DistanceTrace {
        distances_m,
        carried,
    })
}
