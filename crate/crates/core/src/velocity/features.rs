//! Relative-velocity arithmetic and lagged regression features.

use crate::error::{Error, Result};
use crate::model::Scene;

pub const DEFAULT_LAGS: usize = 18;

/// Lead velocity implied by the gap change over one frame:
/// `v_ego + (d_curr - d_prev) / dt`. A growing gap means the lead is faster.
pub fn relative_velocity(d_prev_m: f64, d_curr_m: f64, dt_s: f64, v_ego_mps: f64) -> Result<f64> {
    if dt_s.is_nan() || dt_s <= 0.0 {
        return Err(Error::NonPositiveDt(dt_s));
    }
    Ok(v_ego_mps + (d_curr_m - d_prev_m) / dt_s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFrame {
    pub distance_m: f64,
    pub ego_velocity_mps: f64,
    pub steering_angle_deg: f64,
    /// Lead velocity from gap arithmetic; absent on frame 0.
    pub relvel_lead_mps: Option<f64>,
    pub predicted_lead_velocity_mps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTrace {
    pub fps: f64,
    pub frames: Vec<TraceFrame>,
}

impl VelocityTrace {
    /// Pairs per-frame distance estimates with the scene's ego telemetry.
    pub fn new(scene: &Scene, distances_m: &[f64]) -> Result<Self> {
        if distances_m.len() != scene.len() {
            return Err(Error::LengthMismatch {
                left: distances_m.len(),
                right: scene.len(),
            });
        }
        let dt = scene.dt();
        let mut frames = Vec::with_capacity(scene.len());
        for (k, (f, &d)) in scene.frames.iter().zip(distances_m).enumerate() {
            let relvel = if k == 0 {
                None
            } else {
                Some(relative_velocity(distances_m[k - 1], d, dt, f.ego_velocity_mps)?)
            };
            frames.push(TraceFrame {
                distance_m: d,
                ego_velocity_mps: f.ego_velocity_mps,
                steering_angle_deg: f.steering_angle_deg,
                relvel_lead_mps: relvel,
                predicted_lead_velocity_mps: None,
            });
        }
        Ok(VelocityTrace {
            fps: scene.fps,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Regression input for one frame: `lags` lead-velocity estimates
/// `c(t), c(t-1), ...` followed by ego velocity, steering angle and distance
/// at `t`. Lags that reach before frame 1 are imputed with the ego velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn feature_len(lags: usize) -> usize {
    lags + 3
}

/// Column names in feature order, for reports and model files.
pub fn feature_names(lags: usize) -> Vec<String> {
    (0..lags)
        .map(|k| format!("c_t-{k}"))
        .chain(["ego_velocity_mps", "steering_angle_deg", "distance_m"].map(String::from))
        .collect()
}

pub fn build_features(trace: &VelocityTrace, t: usize, lags: usize) -> Result<FeatureVector> {
    let frame = trace.frames.get(t).ok_or(Error::IndexOutOfRange {
        index: t,
        len: trace.len(),
    })?;
    let dt = 1.0 / trace.fps;
    let mut out = Vec::with_capacity(feature_len(lags));
    for lag in 0..lags {
        let c = match t.checked_sub(lag) {
            Some(k) if k >= 1 => {
                let prev = &trace.frames[k - 1];
                let cur = &trace.frames[k];
                relative_velocity(prev.distance_m, cur.distance_m, dt, cur.ego_velocity_mps)?
            }
            _ => frame.ego_velocity_mps,
        };
        out.push(c);
    }
    out.extend([frame.ego_velocity_mps, frame.steering_angle_deg, frame.distance_m]);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector"));
    }
    Ok(FeatureVector(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(distances: &[f64], ego: &[f64]) -> VelocityTrace {
        VelocityTrace {
            fps: 10.0,
            frames: distances
                .iter()
                .zip(ego)
                .enumerate()
                .map(|(k, (&d, &v))| TraceFrame {
                    distance_m: d,
                    ego_velocity_mps: v,
                    steering_angle_deg: 0.25 * k as f64,
                    relvel_lead_mps: None,
                    predicted_lead_velocity_mps: None,
                })
                .collect(),
        }
    }

    #[test]
    fn relative_velocity_examples() {
        assert!((relative_velocity(20.0, 19.0, 0.1, 15.0).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(relative_velocity(33.3, 33.3, 0.1, 12.5).unwrap(), 12.5);
        assert!((relative_velocity(30.0, 30.5, 0.1, 20.0).unwrap() - 25.0).abs() < 1e-12);
        assert!(matches!(relative_velocity(1.0, 2.0, 0.0, 3.0), Err(Error::NonPositiveDt(_))));
    }

    #[test]
    fn frame_zero_is_fully_imputed() {
        let tr = trace(&[20.0, 21.0], &[11.0, 12.0]);
        let f = build_features(&tr, 0, 18).unwrap();
        assert_eq!(f.len(), 21);
        assert!(f.0[..18].iter().all(|&c| c == 11.0));
        assert_eq!(&f.0[18..], &[11.0, 0.0, 20.0]);
    }

    #[test]
    fn constant_gap_gives_ego_everywhere() {
        let tr = trace(&[25.0; 5], &[12.0; 5]);
        let f = build_features(&tr, 1, 18).unwrap();
        assert!(f.0[..18].iter().all(|&c| c == 12.0));
    }

    #[test]
    fn lag_slots_are_in_order() {
        // 21 frames with a scripted gap; c(k) enumerated by hand below.
        let distances: Vec<f64> = (0..21).map(|k| 20.0 + 0.1 * (k * k) as f64).collect();
        let ego: Vec<f64> = (0..21).map(|k| 10.0 + k as f64).collect();
        let tr = trace(&distances, &ego);
        let f = build_features(&tr, 20, 18).unwrap();
        for (slot, k) in (3..=20).rev().enumerate() {
            // d(k) - d(k-1) = 0.1 * (2k - 1); divided by dt = 0.1
            let expected = ego[k] + (2 * k - 1) as f64;
            assert!((f.0[slot] - expected).abs() < 1e-9, "slot {slot}: {} vs {expected}", f.0[slot]);
        }
        assert_eq!(&f.0[18..], &[30.0, 5.0, distances[20]]);
    }

    #[test]
    fn partial_imputation_uses_current_ego() {
        let tr = trace(&[20.0, 20.5, 21.5], &[10.0, 11.0, 12.0]);
        let f = build_features(&tr, 2, 4).unwrap();
        assert_eq!(f.len(), 7);
        assert!((f.0[0] - 22.0).abs() < 1e-9);
        assert!((f.0[1] - 16.0).abs() < 1e-9);
        assert_eq!(&f.0[2..4], &[12.0, 12.0]);
    }

    #[test]
    fn index_out_of_range() {
        let tr = trace(&[20.0], &[10.0]);
        assert!(matches!(build_features(&tr, 1, 18), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn names_match_length() {
        assert_eq!(feature_names(18).len(), feature_len(18));
        assert_eq!(feature_names(18)[20], "distance_m");
    }
}
