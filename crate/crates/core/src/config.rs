//! Pipeline configuration file.
//!
//! TOML with four optional sections; anything omitted keeps its default.
//!
//! ```toml
//! [tracking]
//! tracker = "ncc"            # ncc | oracle
//! search_radius_px = 32
//!
//! [distance]
//! estimator = "kde"          # mode | kde | resampled
//! mode_bin_width_m = 0.5
//! bandwidth = "silverman"    # or { fixed = 0.8 }
//! grid_points = 512
//! resample_count = 1000
//! rng_seed = 42
//!
//! [velocity]
//! model = "gbdt"             # relvel | linear | gbdt
//! lags = 18
//!
//! [gbdt]
//! rounds = 200
//! learning_rate = 0.1
//! max_leaves = 31
//! min_samples_leaf = 20
//! bins = 255
//! min_gain = 1e-9
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distance::kde::{Bandwidth, KdeConfig};
use crate::distance::{DistanceConfig, Estimator, DEFAULT_MODE_BIN_WIDTH_M};
use crate::error::{Error, Result};
use crate::tracking::{TrackerKind, DEFAULT_SEARCH_RADIUS_PX};
use crate::velocity::{GbdtParams, ModelKind, DEFAULT_LAGS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub tracker: TrackerKind,
    pub search_radius_px: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig {
            tracker: TrackerKind::Ncc,
            search_radius_px: DEFAULT_SEARCH_RADIUS_PX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSection {
    pub estimator: Estimator,
    pub mode_bin_width_m: f64,
    pub bandwidth: Bandwidth,
    pub grid_points: usize,
    pub resample_count: usize,
    pub rng_seed: u64,
}

impl Default for DistanceSection {
    fn default() -> Self {
        let kde = KdeConfig::default();
        DistanceSection {
            estimator: Estimator::Kde,
            mode_bin_width_m: DEFAULT_MODE_BIN_WIDTH_M,
            bandwidth: kde.bandwidth,
            grid_points: kde.grid_points,
            resample_count: kde.resample_count,
            rng_seed: kde.rng_seed,
        }
    }
}

impl DistanceSection {
    pub fn distance_config(&self) -> DistanceConfig {
        DistanceConfig {
            estimator: self.estimator,
            mode_bin_width_m: self.mode_bin_width_m,
            kde: KdeConfig {
                bandwidth: self.bandwidth,
                grid_points: self.grid_points,
                resample_count: self.resample_count,
                rng_seed: self.rng_seed,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VelocityConfig {
    pub model: ModelKind,
    pub lags: usize,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        VelocityConfig {
            model: ModelKind::Gbdt,
            lags: DEFAULT_LAGS,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tracking: TrackingConfig,
    pub distance: DistanceSection,
    pub velocity: VelocityConfig,
    pub gbdt: GbdtParams,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::ConfigInvalid(format!("config file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_config_text(path)?)
    }

    pub fn distance_config(&self) -> DistanceConfig {
        self.distance.distance_config()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tracking.search_radius_px < 1 {
            return Err(Error::ConfigInvalid("search_radius_px must be >= 1".into()));
        }
        let d = self.distance_config();
        if !(d.mode_bin_width_m.is_finite() && d.mode_bin_width_m > 0.0) {
            return Err(Error::ConfigInvalid("mode_bin_width_m must be positive".into()));
        }
        d.kde.validate()?;
        self.gbdt.validate()
    }
}

pub(crate) fn read_config_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::ConfigInvalid(format!("config file {} not found", path.display()))
        }
        _ => Error::io(path, e),
    })
}
