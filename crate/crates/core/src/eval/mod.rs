//! Scoring and the tracker x estimator x model ablation runner.

pub mod metrics;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{read_config_text, DistanceSection, PipelineConfig, TrackingConfig, VelocityConfig};
use crate::dataset::{load_scene, load_tracking_images, MANIFEST_FILE};
use crate::distance::{estimate_distance_trace, DistanceConfig, DistanceTrace, Estimator};
use crate::error::{Error, Result};
use crate::model::{BoundingBox, Scene};
use crate::tracking::{GrayImage, TrackedBox, TrackerKind};
use crate::velocity::{predict_from_distances, train_model, training_rows, GbdtParams, ModelKind, Predictor};

pub use metrics::{pooled_rmse, rmse, squared_error_sum};
pub use report::{
    combination_name, reference_rmse, AblationReport, AblationRow, PredictionRow, SceneScore,
    ScenePredictions, REFERENCE_BASELINE_RMSE,
};

/// A loaded scene plus, when a pixel tracker needs them, its images.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInput {
    pub scene: Scene,
    pub images: Option<Vec<GrayImage>>,
}

impl SceneInput {
    pub fn load(dir: &Path, with_images: bool) -> Result<Self> {
        let scene = load_scene(dir)?;
        let images = if with_images {
            Some(load_tracking_images(dir).map_err(|e| e.in_scene(&scene.scene_id, None))?)
        } else {
            None
        };
        Ok(SceneInput { scene, images })
    }
}

/// Scene directories under `path`: `path` itself when it holds a scene,
/// otherwise its immediate subdirectories that do, sorted by name.
pub fn scene_dirs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join(MANIFEST_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(Error::ConfigInvalid(format!(
            "scene directory {} does not exist",
            path.display()
        )));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Loads every scene under `paths` (see [`scene_dirs`]), in parallel,
/// keeping list order.
pub fn load_inputs(paths: &[PathBuf], with_images: bool) -> Result<Vec<SceneInput>> {
    let mut dirs = Vec::new();
    for p in paths {
        dirs.extend(scene_dirs(p)?);
    }
    collect_ordered(dirs.par_iter().map(|d| SceneInput::load(d, with_images)).collect())
}

fn collect_ordered<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn all_trackers() -> Vec<TrackerKind> {
    vec![TrackerKind::Ncc, TrackerKind::Oracle]
}

fn all_estimators() -> Vec<Estimator> {
    Estimator::ALL.to_vec()
}

fn all_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

/// Everything an ablation run needs besides the scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationSettings {
    pub trackers: Vec<TrackerKind>,
    pub estimators: Vec<Estimator>,
    pub models: Vec<ModelKind>,
    pub search_radius_px: usize,
    /// Shared distance settings; the estimator is taken from `estimators`.
    pub distance: DistanceConfig,
    pub lags: usize,
    pub gbdt: GbdtParams,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings::from_pipeline(&PipelineConfig::default())
            .with_matrix(all_trackers(), all_estimators(), all_models())
    }
}

impl AblationSettings {
    /// The single combination selected by a pipeline config.
    pub fn from_pipeline(cfg: &PipelineConfig) -> Self {
        AblationSettings {
            trackers: vec![cfg.tracking.tracker],
            estimators: vec![cfg.distance.estimator],
            models: vec![cfg.velocity.model],
            search_radius_px: cfg.tracking.search_radius_px,
            distance: cfg.distance_config(),
            lags: cfg.velocity.lags,
            gbdt: cfg.gbdt,
        }
    }

    pub fn with_matrix(
        self,
        trackers: Vec<TrackerKind>,
        estimators: Vec<Estimator>,
        models: Vec<ModelKind>,
    ) -> Self {
        AblationSettings {
            trackers,
            estimators,
            models,
            ..self
        }
    }

    pub fn needs_training(&self) -> bool {
        self.models.iter().any(|m| m.needs_training())
    }

    pub fn needs_images(&self) -> bool {
        self.trackers.contains(&TrackerKind::Ncc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trackers.is_empty() || self.estimators.is_empty() || self.models.is_empty() {
            return Err(Error::ConfigInvalid(
                "ablation needs at least one tracker, estimator and model".into(),
            ));
        }
        if self.search_radius_px < 1 {
            return Err(Error::ConfigInvalid("search_radius_px must be >= 1".into()));
        }
        if !(self.distance.mode_bin_width_m.is_finite() && self.distance.mode_bin_width_m > 0.0) {
            return Err(Error::ConfigInvalid("mode_bin_width_m must be positive".into()));
        }
        self.distance.kde.validate()?;
        self.gbdt.validate()
    }
}

/// Ablation spec file. Lists default to every option; relative scene paths
/// resolve against the ablation file's directory. The `tracker`, `estimator`
/// and `model` keys of the shared sections are ignored in favour of the
/// lists.
///
/// ```toml
/// trackers = ["ncc", "oracle"]
/// estimators = ["mode", "kde", "resampled"]
/// models = ["relvel", "linear", "gbdt"]
/// train_scenes = ["data/train"]
/// test_scenes = ["data/test"]
///
/// [tracking]
/// search_radius_px = 32
/// [distance]
/// mode_bin_width_m = 0.5
/// [velocity]
/// lags = 18
/// [gbdt]
/// rounds = 200
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFile {
    pub trackers: Vec<TrackerKind>,
    pub estimators: Vec<Estimator>,
    pub models: Vec<ModelKind>,
    pub train_scenes: Vec<PathBuf>,
    pub test_scenes: Vec<PathBuf>,
    pub tracking: TrackingConfig,
    pub distance: DistanceSection,
    pub velocity: VelocityConfig,
    pub gbdt: GbdtParams,
}

impl Default for AblationFile {
    fn default() -> Self {
        AblationFile {
            trackers: all_trackers(),
            estimators: all_estimators(),
            models: all_models(),
            train_scenes: Vec::new(),
            test_scenes: Vec::new(),
            tracking: TrackingConfig::default(),
            distance: DistanceSection::default(),
            velocity: VelocityConfig::default(),
            gbdt: GbdtParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSpec {
    pub settings: AblationSettings,
    pub train_scenes: Vec<PathBuf>,
    pub test_scenes: Vec<PathBuf>,
}

impl AblationSpec {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let f: AblationFile =
            toml::from_str(text).map_err(|e| Error::ConfigInvalid(format!("ablation spec: {e}")))?;
        let pipeline = PipelineConfig {
            tracking: f.tracking,
            distance: f.distance,
            velocity: f.velocity,
            gbdt: f.gbdt,
        };
        let settings = AblationSettings::from_pipeline(&pipeline).with_matrix(f.trackers, f.estimators, f.models);
        settings.validate()?;
        let resolve = |v: Vec<PathBuf>| v.into_iter().map(|p| base_dir.join(p)).collect();
        Ok(AblationSpec {
            settings,
            train_scenes: resolve(f.train_scenes),
            test_scenes: resolve(f.test_scenes),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&read_config_text(path)?, base)
    }
}

/// Loads the ablation's scenes and runs [`run_ablation_on`].
pub fn run_ablation(spec: &AblationSpec) -> Result<AblationReport> {
    spec.settings.validate()?;
    if spec.test_scenes.is_empty() {
        return Err(Error::Empty("test scene list is empty".into()));
    }
    let images = spec.settings.needs_images();
    let test = load_inputs(&spec.test_scenes, images)?;
    let train = if spec.settings.needs_training() {
        load_inputs(&spec.train_scenes, images)?
    } else {
        Vec::new()
    };
    run_ablation_on(&spec.settings, &train, &test)
}

fn track_all(inputs: &[SceneInput], tracker: TrackerKind, radius: usize) -> Result<Vec<Vec<TrackedBox>>> {
    let t = tracker.build(radius);
    collect_ordered(
        inputs
            .par_iter()
            .map(|s| {
                t.track(&s.scene, s.images.as_deref())
                    .map_err(|e| match e {
                        Error::Context { .. } => e,
                        e => e.in_scene(&s.scene.scene_id, None),
                    })
            })
            .collect(),
    )
}

fn distances_all(
    inputs: &[SceneInput],
    boxes: &[Vec<TrackedBox>],
    cfg: &DistanceConfig,
) -> Result<Vec<DistanceTrace>> {
    collect_ordered(
        inputs
            .par_iter()
            .zip(boxes)
            .map(|(s, b)| {
                let bbs: Vec<BoundingBox> = b.iter().map(|t| t.bbox).collect();
                estimate_distance_trace(&s.scene, &bbs, cfg)
            })
            .collect(),
    )
}

/// Per-frame output rows for one scene.
pub fn prediction_rows(
    scene: &Scene,
    boxes: Option<&[TrackedBox]>,
    trace: &DistanceTrace,
    predictions: &[f64],
    model: ModelKind,
    lags: usize,
) -> Vec<PredictionRow> {
    let imputed_until = if model.needs_training() { lags } else { 1 };
    scene
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut flags = Vec::new();
            if boxes.is_some_and(|b| b[t].degenerate()) {
                flags.push("held");
            }
            if trace.carried[t] {
                flags.push("carried");
            }
            if t < imputed_until {
                flags.push("imputed");
            }
            PredictionRow {
                idx: f.idx,
                truth: f.lead_velocity_mps,
                prediction: predictions[t],
                distance_estimate: trace.distances_m[t],
                flags: flags.join(";"),
            }
        })
        .collect()
}

/// Scores every tracker x estimator x model combination on `test`, training
/// regressors on `test`-disjoint `train` scenes. Rows come out in list order
/// (trackers outermost, models innermost) and scores are independent of
/// thread scheduling.
pub fn run_ablation_on(
    settings: &AblationSettings,
    train: &[SceneInput],
    test: &[SceneInput],
) -> Result<AblationReport> {
    settings.validate()?;
    if test.is_empty() {
        return Err(Error::Empty("test scene list is empty".into()));
    }
    let need_train = settings.needs_training();
    if need_train && train.is_empty() {
        return Err(Error::ConfigInvalid(
            "linear and gbdt rows require train scenes".into(),
        ));
    }
    for s in test {
        if let Some(missing) = s.scene.frames.iter().position(|f| f.lead_velocity_mps.is_none()) {
            return Err(Error::MissingGroundTruth(missing).in_scene(&s.scene.scene_id, None));
        }
    }
    let distance_truth: Option<Vec<Vec<f64>>> =
        test.iter().map(|s| s.scene.lead_distance_truth()).collect();

    let mut report = AblationReport::default();
    for &tracker in &settings.trackers {
        let started = Instant::now();
        let test_boxes = track_all(test, tracker, settings.search_radius_px)?;
        let train_boxes = if need_train {
            track_all(train, tracker, settings.search_radius_px)?
        } else {
            Vec::new()
        };
        let track_time = started.elapsed().as_secs_f64();

        for &estimator in &settings.estimators {
            let started = Instant::now();
            let dcfg = settings.distance.with_estimator(estimator);
            let test_traces = distances_all(test, &test_boxes, &dcfg)?;
            let (x, y) = if need_train {
                let train_traces = distances_all(train, &train_boxes, &dcfg)?;
                let mut x = Vec::new();
                let mut y = Vec::new();
                for (s, tr) in train.iter().zip(&train_traces) {
                    let (rows, targets) = training_rows(&s.scene, &tr.distances_m, settings.lags)
                        .map_err(|e| match e {
                            Error::Context { .. } => e,
                            e => e.in_scene(&s.scene.scene_id, None),
                        })?;
                    x.extend(rows);
                    y.extend(targets);
                }
                (x, y)
            } else {
                (Vec::new(), Vec::new())
            };
            let distance_time = started.elapsed().as_secs_f64();
            let distance_rmse_m = match &distance_truth {
                Some(truth) => Some(pooled_rmse(
                    test_traces
                        .iter()
                        .zip(truth)
                        .map(|(tr, t)| (tr.distances_m.as_slice(), t.as_slice())),
                )?),
                None => None,
            };

            for &model in &settings.models {
                let started = Instant::now();
                let trained = if model.needs_training() {
                    Some(train_model(model, &x, &y, settings.lags, &settings.gbdt)?)
                } else {
                    None
                };
                let predictor = trained.as_ref().map_or(Predictor::Relvel, Predictor::Trained);
                let predictions: Vec<Vec<f64>> = collect_ordered(
                    test.par_iter()
                        .zip(&test_traces)
                        .map(|(s, tr)| {
                            predict_from_distances(&s.scene, &tr.distances_m, predictor)
                                .map_err(|e| e.in_scene(&s.scene.scene_id, None))
                        })
                        .collect(),
                )?;
                let mut sse = 0.0;
                let mut frames = 0;
                for ((s, pred), (boxes, trace)) in
                    test.iter().zip(&predictions).zip(test_boxes.iter().zip(&test_traces))
                {
                    let truth = s.scene.lead_velocity_truth().expect("checked above");
                    let (scene_sse, n) = squared_error_sum(pred, &truth)
                        .map_err(|e| e.in_scene(&s.scene.scene_id, None))?;
                    sse += scene_sse;
                    frames += n;
                    report.scenes.push(SceneScore {
                        tracker,
                        estimator,
                        model,
                        scene_id: s.scene.scene_id.clone(),
                        rmse: (scene_sse / n as f64).sqrt(),
                        mse: scene_sse / n as f64,
                        frames: n,
                    });
                    report.predictions.push(ScenePredictions {
                        tracker,
                        estimator,
                        model,
                        scene_id: s.scene.scene_id.clone(),
                        rows: prediction_rows(&s.scene, Some(boxes), trace, pred, model, settings.lags),
                    });
                }
                let model_time = started.elapsed().as_secs_f64();
                report.rows.push(AblationRow {
                    tracker,
                    estimator,
                    model,
                    rmse: (sse / frames as f64).sqrt(),
                    distance_rmse_m,
                    frames_scored: frames,
                    wall_time_s: track_time + distance_time + model_time,
                });
                log::info!(
                    "{}: rmse {:.4} over {frames} frames",
                    combination_name(tracker, estimator, model),
                    (sse / frames as f64).sqrt()
                );
            }
        }
    }
    Ok(report)
}
