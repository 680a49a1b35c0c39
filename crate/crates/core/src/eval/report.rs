use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distance::Estimator;
use crate::error::{Error, Result};
use crate::tracking::TrackerKind;
use crate::velocity::ModelKind;

/// Published RMSE of the competition baseline submission.
pub const REFERENCE_BASELINE_RMSE: f64 = 0.582;

/// Published competition RMSE for a combination, when one exists. Those runs
/// used a learned tracker on private data, so the values are shown for
/// orientation only and are never comparable with synthetic scores.
pub fn reference_rmse(tracker: TrackerKind, estimator: Estimator, model: ModelKind) -> Option<f64> {
    if tracker != TrackerKind::Ncc {
        return None;
    }
    match (estimator, model) {
        (Estimator::Kde, ModelKind::Gbdt) => Some(0.416),
        (Estimator::Mode, ModelKind::Gbdt) => Some(0.744),
        (Estimator::Resampled, ModelKind::Gbdt) => Some(0.626),
        (Estimator::Kde, ModelKind::Relvel) => Some(0.830),
        (Estimator::Kde, ModelKind::Linear) => Some(0.770),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub tracker: TrackerKind,
    pub estimator: Estimator,
    pub model: ModelKind,
    /// Pooled lead-velocity RMSE, m/s.
    pub rmse: f64,
    /// Pooled distance RMSE, m; empty when a test scene lacks distance truth.
    pub distance_rmse_m: Option<f64>,
    pub frames_scored: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub tracker: TrackerKind,
    pub estimator: Estimator,
    pub model: ModelKind,
    pub scene_id: String,
    pub rmse: f64,
    pub mse: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub idx: usize,
    pub truth: Option<f64>,
    pub prediction: f64,
    pub distance_estimate: f64,
    /// `;`-separated: `held` (tracker kept the previous box), `carried` (no
    /// valid disparity, distance repeated), `imputed` (lag features filled
    /// with ego velocity).
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePredictions {
    pub tracker: TrackerKind,
    pub estimator: Estimator,
    pub model: ModelKind,
    pub scene_id: String,
    pub rows: Vec<PredictionRow>,
}

impl ScenePredictions {
    pub fn combination(&self) -> String {
        combination_name(self.tracker, self.estimator, self.model)
    }
}

pub fn combination_name(tracker: TrackerKind, estimator: Estimator, model: ModelKind) -> String {
    format!("{tracker}_{estimator}_{model}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub scenes: Vec<SceneScore>,
    pub predictions: Vec<ScenePredictions>,
}

impl AblationReport {
    pub fn row(&self, tracker: TrackerKind, estimator: Estimator, model: ModelKind) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.tracker == tracker && r.estimator == estimator && r.model == model)
    }

    /// Equality ignoring wall-clock timings.
    pub fn same_scores(&self, other: &AblationReport) -> bool {
        let strip = |rows: &[AblationRow]| -> Vec<AblationRow> {
            rows.iter()
                .map(|r| AblationRow {
                    wall_time_s: 0.0,
                    ..r.clone()
                })
                .collect()
        };
        strip(&self.rows) == strip(&other.rows)
            && self.scenes == other.scenes
            && self.predictions == other.predictions
    }

    pub fn to_table(&self) -> String {
        let header = [
            "tracker",
            "estimator",
            "model",
            "rmse_mps",
            "dist_rmse_m",
            "frames",
            "time_s",
            "reference*",
        ];
        let body: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.tracker.to_string(),
                    r.estimator.to_string(),
                    r.model.to_string(),
                    format!("{:.4}", r.rmse),
                    r.distance_rmse_m.map_or("-".into(), |d| format!("{d:.4}")),
                    r.frames_scored.to_string(),
                    format!("{:.2}", r.wall_time_s),
                    reference_rmse(r.tracker, r.estimator, r.model)
                        .map_or("-".into(), |v| format!("{v:.3}")),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[&str]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&mut out, &header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
        for row in &body {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        let _ = writeln!(
            out,
            "* published competition RMSE on private data (baseline {REFERENCE_BASELINE_RMSE}); not comparable with synthetic scores"
        );
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }

    pub fn rows_from_csv(text: &str) -> Result<Vec<AblationRow>> {
        from_csv(text)
    }

    pub fn scenes_csv(&self) -> Result<String> {
        to_csv(&self.scenes)
    }

    /// Writes `report.csv`, `scenes.csv` and
    /// `<tracker>_<estimator>_<model>/<scene_id>/predictions.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write(dir, "report.csv", &self.to_csv()?)?;
        write(dir, "scenes.csv", &self.scenes_csv()?)?;
        for p in &self.predictions {
            let sub = dir.join(p.combination()).join(&p.scene_id);
            write(&sub, "predictions.csv", &to_csv(&p.rows)?)?;
        }
        Ok(())
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Csv(e.to_string()))
}

pub fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| Error::Csv(e.to_string())))
        .collect()
}

pub fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}
