//! Lead-velocity prediction from a per-frame distance trace.

pub mod features;
pub mod gbdt;
pub mod linear;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distance::{estimate_distance_trace, DistanceConfig, DistanceTrace};
use crate::error::{Error, Result};
use crate::model::{BoundingBox, Scene};

pub use features::{
    build_features, feature_len, feature_names, relative_velocity, FeatureVector, TraceFrame,
    VelocityTrace, DEFAULT_LAGS,
};
pub use gbdt::{train_gbdt, GbdtModel, GbdtParams};
pub use linear::{train_linear, LinearModel};

pub const MODEL_FILE_FORMAT: &str = "leadvel-velocity-model";
pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Gap arithmetic only; no training.
    Relvel,
    Linear,
    Gbdt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Relvel, ModelKind::Linear, ModelKind::Gbdt];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Relvel => "relvel",
            ModelKind::Linear => "linear",
            ModelKind::Gbdt => "gbdt",
        }
    }

    pub fn needs_training(self) -> bool {
        self != ModelKind::Relvel
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relvel" => Ok(ModelKind::Relvel),
            "linear" => Ok(ModelKind::Linear),
            "gbdt" => Ok(ModelKind::Gbdt),
            other => Err(Error::ConfigInvalid(format!(
                "unknown model {other:?} (expected relvel, linear or gbdt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum Regressor {
    Linear(LinearModel),
    Gbdt(GbdtModel),
}

/// A fitted regressor plus the feature layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub format_version: u32,
    pub lags: usize,
    pub feature_names: Vec<String>,
    pub regressor: Regressor,
}

impl TrainedModel {
    pub fn new(lags: usize, regressor: Regressor) -> Self {
        TrainedModel {
            format: MODEL_FILE_FORMAT.to_owned(),
            format_version: MODEL_FILE_VERSION,
            lags,
            feature_names: feature_names(lags),
            regressor,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.regressor {
            Regressor::Linear(_) => ModelKind::Linear,
            Regressor::Gbdt(_) => ModelKind::Gbdt,
        }
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        match &self.regressor {
            Regressor::Linear(m) => m.predict(features.as_slice()),
            Regressor::Gbdt(m) => m.predict(features.as_slice()),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text).map_err(|e| Error::MalformedJson {
            line: e.line(),
            column: e.column(),
            reason: e.to_string(),
        })?;
        if m.format != MODEL_FILE_FORMAT || m.format_version != MODEL_FILE_VERSION {
            return Err(Error::ModelFormat(format!("{} v{}", m.format, m.format_version)));
        }
        let expected = feature_len(m.lags);
        let actual = match &m.regressor {
            Regressor::Linear(l) => l.coefficients.len(),
            Regressor::Gbdt(g) => g.n_features,
        };
        if actual != expected {
            return Err(Error::FeatureLengthMismatch {
                expected,
                got: actual,
            });
        }
        Ok(m)
    }
}

/// What turns a distance trace into velocities.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Relvel,
    Trained(&'a TrainedModel),
}

impl Predictor<'_> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Predictor::Relvel => ModelKind::Relvel,
            Predictor::Trained(m) => m.kind(),
        }
    }
}

/// Per-frame lead velocity from an already estimated distance trace.
///
/// `relvel` returns the gap-arithmetic estimate `c(t)`, with `v_ego(0)` on
/// frame 0. Trained models regress on [`build_features`].
pub fn predict_from_distances(
    scene: &Scene,
    distances_m: &[f64],
    predictor: Predictor<'_>,
) -> Result<Vec<f64>> {
    let trace = VelocityTrace::new(scene, distances_m)?;
    match predictor {
        Predictor::Relvel => Ok(trace
            .frames
            .iter()
            .map(|f| f.relvel_lead_mps.unwrap_or(f.ego_velocity_mps))
            .collect()),
        Predictor::Trained(model) => (0..trace.len())
            .map(|t| model.predict(&build_features(&trace, t, model.lags)?))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePrediction {
    pub distances: DistanceTrace,
    pub lead_velocity_mps: Vec<f64>,
}

pub fn predict_scene(
    scene: &Scene,
    boxes: &[BoundingBox],
    distance_cfg: &DistanceConfig,
    predictor: Predictor<'_>,
) -> Result<ScenePrediction> {
    let distances = estimate_distance_trace(scene, boxes, distance_cfg)?;
    let lead_velocity_mps = predict_from_distances(scene, &distances.distances_m, predictor)
        .map_err(|e| e.in_scene(&scene.scene_id, None))?;
    Ok(ScenePrediction {
        distances,
        lead_velocity_mps,
    })
}

/// Feature rows and ground-truth targets for every frame of a train scene.
pub fn training_rows(scene: &Scene, distances_m: &[f64], lags: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let truth = scene.lead_velocity_truth().ok_or_else(|| {
        Error::MissingGroundTruth(
            scene
                .frames
                .iter()
                .position(|f| f.lead_velocity_mps.is_none())
                .unwrap_or(0),
        )
        .in_scene(&scene.scene_id, None)
    })?;
    let trace = VelocityTrace::new(scene, distances_m)?;
    let rows = (0..trace.len())
        .map(|t| build_features(&trace, t, lags).map(|f| f.0))
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, truth))
}

pub fn train_model(
    kind: ModelKind,
    features: &[Vec<f64>],
    targets: &[f64],
    lags: usize,
    gbdt_params: &GbdtParams,
) -> Result<TrainedModel> {
    let regressor = match kind {
        ModelKind::Relvel => {
            return Err(Error::ConfigInvalid("relvel has nothing to train".into()));
        }
        ModelKind::Linear => Regressor::Linear(train_linear(features, targets)?),
        ModelKind::Gbdt => Regressor::Gbdt(train_gbdt(features, targets, gbdt_params)?),
    };
    Ok(TrainedModel::new(lags, regressor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CameraRig, DisparityMap, FrameRecord};

    fn scene(n: usize, ego: f64) -> Scene {
        Scene {
            scene_id: "v".into(),
            fps: 10.0,
            rig: CameraRig::default(),
            frames: (0..n)
                .map(|idx| FrameRecord {
                    idx,
                    ego_velocity_mps: ego + idx as f64 * 0.1,
                    steering_angle_deg: 0.0,
                    disparity: DisparityMap::filled(4, 4, 24.5),
                    lead_bbox: Some(BoundingBox::new(0, 0, 4, 4)),
                    lead_velocity_mps: Some(ego),
                    lead_distance_m: Some(20.0),
                })
                .collect(),
        }
    }

    #[test]
    fn relvel_bootstraps_frame_zero_with_ego() {
        let s = scene(5, 15.0);
        let d = [20.0, 20.5, 21.0, 21.0, 20.0];
        let v = predict_from_distances(&s, &d, Predictor::Relvel).unwrap();
        assert_eq!(v[0], 15.0);
        assert!((v[1] - (15.1 + 5.0)).abs() < 1e-9);
        assert!((v[3] - 15.3).abs() < 1e-12);
        assert!((v[4] - (15.4 - 10.0)).abs() < 1e-9);
    }

    #[test]
    fn trained_model_round_trips_and_predicts() {
        let s = scene(30, 12.0);
        let d: Vec<f64> = (0..30).map(|k| 20.0 + 0.05 * k as f64).collect();
        let (x, y) = training_rows(&s, &d, 4).unwrap();
        assert_eq!(x.len(), 30);
        assert_eq!(x[0].len(), 7);
        let m = train_model(ModelKind::Linear, &x, &y, 4, &GbdtParams::default()).unwrap();
        let back = TrainedModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let p = predict_from_distances(&s, &d, Predictor::Trained(&back)).unwrap();
        assert_eq!(p.len(), 30);
        assert!(p.iter().all(|v| (v - 12.0).abs() < 1e-6));
    }

    #[test]
    fn relvel_cannot_be_trained() {
        assert!(train_model(ModelKind::Relvel, &[vec![1.0]], &[1.0], 18, &GbdtParams::default()).is_err());
    }

    #[test]
    fn missing_truth_blocks_training() {
        let mut s = scene(3, 10.0);
        s.frames[2].lead_velocity_mps = None;
        let err = training_rows(&s, &[20.0; 3], 18).unwrap_err();
        assert!(matches!(err.root(), Error::MissingGroundTruth(2)));
    }

    #[test]
    fn model_file_layout_is_checked() {
        let m = TrainedModel::new(
            18,
            Regressor::Linear(LinearModel {
                coefficients: vec![0.0; 20],
                intercept: 1.0,
            }),
        );
        assert!(matches!(
            TrainedModel::from_json(&m.to_json()),
            Err(Error::FeatureLengthMismatch { expected: 21, got: 20 })
        ));
    }
}
