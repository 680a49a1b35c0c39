//! On-disk scene layout.
//!
//! ```text
//! <scene_dir>/scene.json      annotations (SceneManifest)
//! <scene_dir>/disp_0000.pgm   16-bit Q8.8 disparity per frame
//! <scene_dir>/img_0000.pgm    8-bit grayscale tracking image per frame
//! ```
//!
//! Train scenes carry `lead_bbox`, `lead_velocity_mps` and `lead_distance_m`
//! on every frame; test scenes carry only the frame-0 `lead_bbox`.

pub mod pgm;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, CameraRig, FrameRecord, Scene};
use crate::tracking::GrayImage;

pub use pgm::{read_disparity_pgm, read_gray_pgm, write_disparity_pgm, write_gray_pgm};

pub const MANIFEST_FILE: &str = "scene.json";

/// `scene.json`: the scene with rasters replaced by file names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene_id: String,
    pub fps: f64,
    pub camera: CameraRig,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub idx: usize,
    pub ego_velocity_mps: f64,
    pub steering_angle_deg: f64,
    pub disparity_file: String,
    pub image_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_bbox: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_velocity_mps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_distance_m: Option<f64>,
}

pub fn disparity_file_name(idx: usize) -> String {
    format!("disp_{idx:04}.pgm")
}

pub fn image_file_name(idx: usize) -> String {
    format!("img_{idx:04}.pgm")
}

impl SceneManifest {
    pub fn for_scene(scene: &Scene) -> Self {
        SceneManifest {
            scene_id: scene.scene_id.clone(),
            fps: scene.fps,
            camera: scene.rig,
            frames: scene
                .frames
                .iter()
                .map(|f| FrameEntry {
                    idx: f.idx,
                    ego_velocity_mps: f.ego_velocity_mps,
                    steering_angle_deg: f.steering_angle_deg,
                    disparity_file: disparity_file_name(f.idx),
                    image_file: image_file_name(f.idx),
                    lead_bbox: f.lead_bbox,
                    lead_velocity_mps: f.lead_velocity_mps,
                    lead_distance_m: f.lead_distance_m,
                })
                .collect(),
        }
    }

    /// Raster file names must be unique within a scene.
    pub fn check_unique_files(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.frames {
            for name in [&f.disparity_file, &f.image_file] {
                if !seen.insert(name.as_str()) {
                    return Err(Error::ConfigInvalid(format!(
                        "raster file {name} referenced more than once"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedJson {
            line: e.line(),
            column: e.column(),
            reason: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn read_manifest(dir: &Path) -> Result<SceneManifest> {
    let text = read_to_string(dir, MANIFEST_FILE)?;
    let manifest = SceneManifest::from_json(&text)?;
    manifest.check_unique_files()?;
    Ok(manifest)
}

fn read_bytes(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(name.to_owned()),
        _ => Error::io(path, e),
    })
}

fn read_to_string(dir: &Path, name: &str) -> Result<String> {
    let bytes = read_bytes(dir, name)?;
    String::from_utf8(bytes).map_err(|e| Error::MalformedJson {
        line: 0,
        column: 0,
        reason: format!("not UTF-8: {e}"),
    })
}

fn shape_mismatch(file: &str, declared: (usize, usize), actual: (usize, usize)) -> Error {
    Error::RasterShapeMismatch {
        file: file.to_owned(),
        declared_w: declared.0,
        declared_h: declared.1,
        actual_w: actual.0,
        actual_h: actual.1,
    }
}

/// Loads a scene directory. Disparity rasters are decoded as `raw / 256`.
///
/// The first disparity raster fixes the scene's dimensions; every other
/// raster (disparity or image) must match it. Image files are checked for
/// presence only; use [`load_tracking_images`] to decode them.
pub fn load_scene(dir: &Path) -> Result<Scene> {
    let manifest = read_manifest(dir)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    let mut dims: Option<(usize, usize)> = None;
    for entry in &manifest.frames {
        let disparity = read_disparity_pgm(&read_bytes(dir, &entry.disparity_file)?)?;
        let shape = (disparity.width, disparity.height);
        match dims {
            None => dims = Some(shape),
            Some(d) if d != shape => return Err(shape_mismatch(&entry.disparity_file, d, shape)),
            _ => {}
        }
        if !dir.join(&entry.image_file).is_file() {
            return Err(Error::MissingFile(entry.image_file.clone()));
        }
        frames.push(FrameRecord {
            idx: entry.idx,
            ego_velocity_mps: entry.ego_velocity_mps,
            steering_angle_deg: entry.steering_angle_deg,
            disparity,
            lead_bbox: entry.lead_bbox,
            lead_velocity_mps: entry.lead_velocity_mps,
            lead_distance_m: entry.lead_distance_m,
        });
    }
    let scene = Scene {
        scene_id: manifest.scene_id,
        fps: manifest.fps,
        rig: manifest.camera,
        frames,
    };
    scene.ensure_valid()?;
    Ok(scene)
}

/// Decodes the per-frame grayscale tracking images, in frame order.
pub fn load_tracking_images(dir: &Path) -> Result<Vec<GrayImage>> {
    let manifest = read_manifest(dir)?;
    let mut dims: Option<(usize, usize)> = None;
    manifest
        .frames
        .iter()
        .map(|entry| {
            let img = read_gray_pgm(&read_bytes(dir, &entry.image_file)?)?;
            let shape = (img.width, img.height);
            match dims {
                None => dims = Some(shape),
                Some(d) if d != shape => return Err(shape_mismatch(&entry.image_file, d, shape)),
                _ => {}
            }
            Ok(img)
        })
        .collect()
}

/// Writes `scene.json`, one disparity raster and one tracking image per frame.
///
/// Disparity is quantized to 1/256 px on write, so a save of a loaded scene
/// reproduces the original files byte for byte.
pub fn save_scene(scene: &Scene, images: &[GrayImage], dir: &Path) -> Result<()> {
    scene.ensure_valid()?;
    if images.len() != scene.len() {
        return Err(Error::LengthMismatch {
            left: images.len(),
            right: scene.len(),
        });
    }
    let manifest = SceneManifest::for_scene(scene);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for ((frame, entry), img) in scene.frames.iter().zip(&manifest.frames).zip(images) {
        let shape = (frame.disparity.width, frame.disparity.height);
        if (img.width, img.height) != shape {
            return Err(shape_mismatch(&entry.image_file, shape, (img.width, img.height)));
        }
        write_file(dir, &entry.disparity_file, &write_disparity_pgm(&frame.disparity))?;
        write_file(dir, &entry.image_file, &write_gray_pgm(img))?;
    }
    write_file(dir, MANIFEST_FILE, manifest.to_json().as_bytes())
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}
