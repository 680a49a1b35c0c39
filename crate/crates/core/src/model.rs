//! Domain types shared by every pipeline stage.
//!
//! Units are fixed crate-wide: velocities in m/s, distances in meters,
//! angles in degrees, raster coordinates in integer pixels with the origin at
//! the top-left corner. A frame's timestamp is `idx / fps`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stereo geometry behind the disparity-to-distance map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    /// Separation between the two cameras (stereo baseline), meters.
    pub offset_m: f64,
    /// Focal length, pixels.
    pub focal_length_px: f64,
}

impl CameraRig {
    pub fn new(offset_m: f64, focal_length_px: f64) -> Result<Self> {
        let rig = CameraRig {
            offset_m,
            focal_length_px,
        };
        if rig.is_valid() {
            Ok(rig)
        } else {
            Err(Error::ConfigInvalid(format!(
                "camera rig needs positive finite offset and focal length, got {offset_m}, {focal_length_px}"
            )))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.offset_m.is_finite()
            && self.focal_length_px.is_finite()
            && self.offset_m > 0.0
            && self.focal_length_px > 0.0
    }

    /// `offset * focal_length`, the numerator of the depth formula.
    #[inline]
    pub fn depth_scale(&self) -> f64 {
        self.offset_m * self.focal_length_px
    }

    /// Distance in meters for a valid (positive) disparity.
    #[inline]
    pub fn distance_for(&self, disparity_px: f64) -> f64 {
        self.depth_scale() / disparity_px
    }

    /// Disparity in pixels that an object at `distance_m` produces.
    #[inline]
    pub fn disparity_for(&self, distance_m: f64) -> f64 {
        self.depth_scale() / distance_m
    }
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig {
            offset_m: 0.35,
            focal_length_px: 1400.0,
        }
    }
}

/// Axis-aligned box in integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }

    pub fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        if self.fits(width, height) {
            Ok(())
        } else {
            Err(Error::BoxOutOfBounds {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
                width,
                height,
            })
        }
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.x, self.y, self.w, self.h)
    }
}

// Serialized as the compact `[x, y, w, h]` array used by the annotation files.
impl Serialize for BoundingBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y, self.w, self.h].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x, y, w, h] = <[usize; 4]>::deserialize(d)?;
        Ok(BoundingBox { x, y, w, h })
    }
}

/// Row-major disparity raster in pixels. Zero marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let map = DisparityMap {
            width,
            height,
            values,
        };
        if let Some(problem) = map.problem() {
            return Err(Error::ConfigInvalid(problem));
        }
        Ok(map)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        DisparityMap {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    fn problem(&self) -> Option<String> {
        if self.values.len() != self.width * self.height {
            return Some(format!(
                "disparity raster holds {} values for {}x{}",
                self.values.len(),
                self.width,
                self.height
            ));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Some(format!(
                "disparity pixel {i} is {} (must be finite and >= 0)",
                self.values[i]
            ));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub idx: usize,
    pub ego_velocity_mps: f64,
    pub steering_angle_deg: f64,
    pub disparity: DisparityMap,
    pub lead_bbox: Option<BoundingBox>,
    pub lead_velocity_mps: Option<f64>,
    pub lead_distance_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub fps: f64,
    pub rig: CameraRig,
    pub frames: Vec<FrameRecord>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    /// True when every frame carries lead velocity ground truth.
    pub fn has_velocity_truth(&self) -> bool {
        self.frames.iter().all(|f| f.lead_velocity_mps.is_some())
    }

    pub fn lead_velocity_truth(&self) -> Option<Vec<f64>> {
        self.frames.iter().map(|f| f.lead_velocity_mps).collect()
    }

    pub fn lead_distance_truth(&self) -> Option<Vec<f64>> {
        self.frames.iter().map(|f| f.lead_distance_m).collect()
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate_scene(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvariantViolation(violations))
        }
    }
}

/// One broken invariant, located by frame (when frame-specific) and field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub frame: Option<usize>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(idx) => write!(f, "frame {idx}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Checks every domain invariant and reports each broken one as data.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame: Option<usize>, field: &'static str, message: String| {
        out.push(Violation {
            frame,
            field,
            message,
        })
    };

    if !(scene.fps.is_finite() && scene.fps > 0.0) {
        push(None, "fps", format!("must be positive and finite, got {}", scene.fps));
    }
    if !scene.rig.is_valid() {
        push(
            None,
            "camera",
            format!(
                "offset_m and focal_length_px must be positive and finite, got {} and {}",
                scene.rig.offset_m, scene.rig.focal_length_px
            ),
        );
    }
    if scene.frames.is_empty() {
        push(None, "frames", "scene has no frames".into());
        return out;
    }
    if scene.frames[0].lead_bbox.is_none() {
        push(Some(0), "lead_bbox", "first frame must carry a lead box".into());
    }

    for (pos, frame) in scene.frames.iter().enumerate() {
        let at = Some(frame.idx);
        if frame.idx != pos {
            push(
                at,
                "idx",
                format!("non-contiguous idx: expected {pos}, found {}", frame.idx),
            );
        }
        if !(frame.ego_velocity_mps.is_finite() && frame.ego_velocity_mps >= 0.0) {
            push(
                at,
                "ego_velocity_mps",
                format!("must be finite and >= 0, got {}", frame.ego_velocity_mps),
            );
        }
        if !frame.steering_angle_deg.is_finite() {
            push(at, "steering_angle_deg", "must be finite".into());
        }
        if let Some(v) = frame.lead_velocity_mps {
            if !v.is_finite() {
                push(at, "lead_velocity_mps", "must be finite".into());
            }
        }
        if let Some(d) = frame.lead_distance_m {
            if !(d.is_finite() && d > 0.0) {
                push(at, "lead_distance_m", format!("must be positive, got {d}"));
            }
        }
        if let Some(problem) = frame.disparity.problem() {
            push(at, "disparity", problem);
        }
        if let Some(b) = frame.lead_bbox {
            if !b.fits(frame.disparity.width, frame.disparity.height) {
                push(
                    at,
                    "lead_bbox",
                    format!(
                        "box {b} does not fit the {}x{} raster",
                        frame.disparity.width, frame.disparity.height
                    ),
                );
            }
        }
    }
    out
}
