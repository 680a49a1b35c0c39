//! Deterministic synthetic scenes with full ground truth.
//!
//! Longitudinal kinematics only: the lead and ego vehicles follow closed-form
//! speed profiles and the gap is integrated once per frame. Disparity is
//! rendered directly from a pinhole stereo model, with the top rows of the
//! lead box optionally showing background depth, and Gaussian pixel noise.
//! Every random draw comes from [`crate::rng::Rng`] seeded with
//! `ScenarioConfig::rng_seed`, in this order: the lead texture (row-major
//! cells), then per frame the steering angle followed by one noise sample per
//! disparity pixel (row-major, skipped entirely when the noise sigma is 0).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, CameraRig, DisparityMap, FrameRecord, Scene};
use crate::rng::Rng;
use crate::tracking::GrayImage;

/// Gap floor, meters; reaching it marks a collision.
pub const MIN_GAP_M: f64 = 1.0;
pub const DISPARITY_MIN_PX: f64 = 0.01;
pub const DISPARITY_MAX_PX: f64 = 255.99;
/// Box height over box width.
pub const BOX_ASPECT: f64 = 0.8;

const TEXTURE_CELLS: (usize, usize) = (16, 12);
const IMAGE_BACKGROUND: u8 = 96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VelocityProfile {
    Constant {
        v: f64,
    },
    /// `v0 + amplitude * sin(2 pi t / period_s)`
    Sinusoidal {
        v0: f64,
        amplitude: f64,
        period_s: f64,
    },
    /// `max(v0 - decel * t, floor)`
    Braking {
        v0: f64,
        decel: f64,
        floor: f64,
    },
}

impl VelocityProfile {
    pub fn speed_at(&self, t_s: f64) -> f64 {
        match *self {
            VelocityProfile::Constant { v } => v,
            VelocityProfile::Sinusoidal {
                v0,
                amplitude,
                period_s,
            } => v0 + amplitude * (2.0 * std::f64::consts::PI * t_s / period_s).sin(),
            VelocityProfile::Braking { v0, decel, floor } => (v0 - decel * t_s).max(floor),
        }
    }

    /// Lowest speed the profile can reach.
    fn min_speed(&self) -> f64 {
        match *self {
            VelocityProfile::Constant { v } => v,
            VelocityProfile::Sinusoidal { v0, amplitude, .. } => v0 - amplitude.abs(),
            VelocityProfile::Braking { v0, floor, .. } => v0.min(floor),
        }
    }

    fn check(&self, who: &str) -> Result<()> {
        let finite = match *self {
            VelocityProfile::Constant { v } => v.is_finite(),
            VelocityProfile::Sinusoidal {
                v0,
                amplitude,
                period_s,
            } => v0.is_finite() && amplitude.is_finite() && period_s.is_finite() && period_s > 0.0,
            VelocityProfile::Braking { v0, decel, floor } => {
                v0.is_finite() && decel.is_finite() && floor.is_finite() && decel >= 0.0
            }
        };
        if !finite || self.min_speed() < 0.0 {
            return Err(Error::ConfigInvalid(format!(
                "{who} profile {self:?} must be finite with speeds >= 0"
            )));
        }
        Ok(())
    }
}

/// Closed-form speed of a profile at time `t_s`.
pub fn velocity_profile(profile: &VelocityProfile, t_s: f64) -> f64 {
    profile.speed_at(t_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_frames: usize,
    pub fps: f64,
    pub rig: CameraRig,
    pub image_width: usize,
    pub image_height: usize,
    pub lead: VelocityProfile,
    pub ego: VelocityProfile,
    pub initial_gap_m: f64,
    /// Gaussian disparity noise sigma, pixels.
    pub disparity_noise_px: f64,
    /// Fraction of box rows, from the top, that show background depth.
    pub contamination: f64,
    pub background_distance_m: f64,
    pub lead_width_m: f64,
    /// Steering angle is uniform in `[-s, s]` degrees.
    pub steering_noise_deg: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_frames: 150,
            fps: 10.0,
            rig: CameraRig::default(),
            image_width: 640,
            image_height: 400,
            lead: VelocityProfile::Constant { v: 15.0 },
            ego: VelocityProfile::Constant { v: 15.0 },
            initial_gap_m: 20.0,
            disparity_noise_px: 0.0,
            contamination: 0.0,
            background_distance_m: 120.0,
            lead_width_m: 1.8,
            steering_noise_deg: 2.0,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.n_frames < 1 {
            return bad("n_frames must be >= 1".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !self.rig.is_valid() {
            return bad("camera rig must have positive offset and focal length".into());
        }
        if self.image_width < 1 || self.image_height < 1 {
            return bad("image must be at least 1x1".into());
        }
        if !(self.initial_gap_m.is_finite() && self.initial_gap_m > 0.0) {
            return bad(format!("initial gap must be positive, got {}", self.initial_gap_m));
        }
        if !(0.0..1.0).contains(&self.contamination) {
            return bad(format!("contamination must be in [0, 1), got {}", self.contamination));
        }
        if !(self.disparity_noise_px.is_finite() && self.disparity_noise_px >= 0.0) {
            return bad("disparity noise must be >= 0".into());
        }
        if !(self.background_distance_m.is_finite() && self.background_distance_m > 0.0) {
            return bad("background distance must be positive".into());
        }
        if !(self.lead_width_m.is_finite() && self.lead_width_m > 0.0) {
            return bad("lead width must be positive".into());
        }
        if !(self.steering_noise_deg.is_finite() && self.steering_noise_deg >= 0.0) {
            return bad("steering noise must be >= 0".into());
        }
        self.lead.check("lead")?;
        self.ego.check("ego")
    }

    /// Pinhole box for a lead vehicle at `gap_m`: width `lead_width * focal /
    /// gap`, height `0.8 * width`, centered horizontally and on the horizon
    /// row (`image_height / 2`), clamped to the image.
    pub fn lead_box(&self, gap_m: f64) -> BoundingBox {
        let w = ((self.lead_width_m * self.rig.focal_length_px / gap_m).round() as usize)
            .clamp(1, self.image_width);
        let h = ((BOX_ASPECT * w as f64).round() as usize).clamp(1, self.image_height);
        let x = (self.image_width - w) / 2;
        let y = (self.image_height / 2)
            .saturating_sub(h / 2)
            .min(self.image_height - h);
        BoundingBox::new(x, y, w, h)
    }

    /// Box rows, counted from the top, that carry background disparity.
    pub fn contaminated_rows(&self, bbox: &BoundingBox) -> usize {
        ((self.contamination * bbox.h as f64).round() as usize).min(bbox.h - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRow {
    pub idx: usize,
    pub time_s: f64,
    pub gap_m: f64,
    pub lead_velocity_mps: f64,
    pub ego_velocity_mps: f64,
    pub bbox: BoundingBox,
    /// The gap hit [`MIN_GAP_M`] on this frame.
    pub collision: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: Scene,
    pub images: Vec<GrayImage>,
    pub truth: Vec<GroundTruthRow>,
}

/// Renders one scene.
///
/// The gap advances as `gap(k) = gap(k-1) + (v_lead(t_k) - v_ego(t_k)) / fps`
/// with `t_k = k / fps`, so the one-frame gap difference reproduces the lead
/// velocity exactly. The gap is clamped at [`MIN_GAP_M`].
pub fn generate_scene(cfg: &ScenarioConfig, scene_id: &str) -> Result<GeneratedScene> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.rng_seed);
    let (tw, th) = TEXTURE_CELLS;
    let texture: Vec<u8> = (0..tw * th).map(|_| 30 + rng.next_index(201) as u8).collect();

    let (width, height) = (cfg.image_width, cfg.image_height);
    let bg_disp = cfg.rig.disparity_for(cfg.background_distance_m);
    let dt = 1.0 / cfg.fps;

    let mut frames = Vec::with_capacity(cfg.n_frames);
    let mut images = Vec::with_capacity(cfg.n_frames);
    let mut truth = Vec::with_capacity(cfg.n_frames);
    let mut gap = cfg.initial_gap_m;
    for idx in 0..cfg.n_frames {
        let t = idx as f64 * dt;
        let v_lead = cfg.lead.speed_at(t);
        let v_ego = cfg.ego.speed_at(t);
        let mut collision = false;
        if idx > 0 {
            gap += (v_lead - v_ego) * dt;
            if gap < MIN_GAP_M {
                gap = MIN_GAP_M;
                collision = true;
            }
        }
        let bbox = cfg.lead_box(gap);
        let steering = if cfg.steering_noise_deg > 0.0 {
            rng.uniform(-cfg.steering_noise_deg, cfg.steering_noise_deg)
        } else {
            0.0
        };

        let mut disparity = DisparityMap::filled(width, height, bg_disp);
        let lead_disp = cfg.rig.disparity_for(gap);
        let first_vehicle_row = bbox.y + cfg.contaminated_rows(&bbox);
        for y in first_vehicle_row..bbox.y + bbox.h {
            disparity.values[y * width + bbox.x..][..bbox.w].fill(lead_disp);
        }
        let sigma = cfg.disparity_noise_px;
        for v in disparity.values.iter_mut() {
            if sigma > 0.0 {
                *v += sigma * rng.next_gaussian();
            }
            *v = v.clamp(DISPARITY_MIN_PX, DISPARITY_MAX_PX);
        }

        images.push(render_image(width, height, &bbox, &texture));
        frames.push(FrameRecord {
            idx,
            ego_velocity_mps: v_ego,
            steering_angle_deg: steering,
            disparity,
            lead_bbox: Some(bbox),
            lead_velocity_mps: Some(v_lead),
            lead_distance_m: Some(gap),
        });
        truth.push(GroundTruthRow {
            idx,
            time_s: t,
            gap_m: gap,
            lead_velocity_mps: v_lead,
            ego_velocity_mps: v_ego,
            bbox,
            collision,
        });
    }

    Ok(GeneratedScene {
        scene: Scene {
            scene_id: scene_id.to_owned(),
            fps: cfg.fps,
            rig: cfg.rig,
            frames,
        },
        images,
        truth,
    })
}

/// Flat background with the lead texture stretched over the box.
fn render_image(width: usize, height: usize, bbox: &BoundingBox, texture: &[u8]) -> GrayImage {
    let (tw, th) = TEXTURE_CELLS;
    let mut img = GrayImage::filled(width, height, IMAGE_BACKGROUND);
    let columns: Vec<usize> = (0..bbox.w).map(|x| x * tw / bbox.w).collect();
    for y in 0..bbox.h {
        let cells = &texture[(y * th / bbox.h) * tw..][..tw];
        let row = (bbox.y + y) * width + bbox.x;
        for (px, &c) in img.values[row..row + bbox.w].iter_mut().zip(&columns) {
            *px = cells[c];
        }
    }
    img
}

/// Strips ground truth the way test scenes are distributed: only the
/// frame-0 box survives.
pub fn as_test_scene(scene: &Scene) -> Scene {
    let mut s = scene.clone();
    for f in s.frames.iter_mut() {
        if f.idx > 0 {
            f.lead_bbox = None;
        }
        f.lead_velocity_mps = None;
        f.lead_distance_m = None;
    }
    s
}

/// Scenario used for the contamination benchmark: 100 frames, 30% of the
/// box rows showing background, 0.5 px disparity noise. Speed profiles and
/// the initial gap vary with `seed`.
pub fn contamination_benchmark(seed: u64) -> ScenarioConfig {
    let mut p = Rng::new(seed ^ 0xC0A7_A11B_EAC4_0000);
    let ego_v = p.uniform(10.0, 20.0);
    let (lead, ego) = match p.next_index(3) {
        0 => (
            VelocityProfile::Sinusoidal {
                v0: ego_v + p.uniform(-1.0, 1.0),
                amplitude: p.uniform(0.5, 3.0),
                period_s: p.uniform(5.0, 12.0),
            },
            VelocityProfile::Constant { v: ego_v },
        ),
        1 => {
            let v0 = ego_v + p.uniform(0.0, 2.0);
            (
                VelocityProfile::Braking {
                    v0,
                    decel: p.uniform(0.5, 2.0),
                    floor: v0 - p.uniform(1.0, 3.0),
                },
                VelocityProfile::Constant { v: ego_v },
            )
        }
        _ => (
            VelocityProfile::Sinusoidal {
                v0: ego_v + p.uniform(-0.5, 0.5),
                amplitude: p.uniform(0.5, 2.5),
                period_s: p.uniform(5.0, 10.0),
            },
            VelocityProfile::Sinusoidal {
                v0: ego_v,
                amplitude: p.uniform(0.0, 1.5),
                period_s: p.uniform(6.0, 12.0),
            },
        ),
    };
    ScenarioConfig {
        n_frames: 100,
        lead,
        ego,
        initial_gap_m: p.uniform(18.0, 35.0),
        disparity_noise_px: 0.5,
        contamination: 0.3,
        rng_seed: seed,
        ..ScenarioConfig::default()
    }
}

/// Flat `key = value` scenario file (TOML syntax). Every key is optional and
/// defaults to [`ScenarioConfig::default`].
///
/// ```text
/// n_frames = 120
/// fps = 10.0
/// offset_m = 0.35
/// focal_length_px = 1400.0
/// image_width = 640
/// image_height = 400
/// lead_profile = "sinusoidal"   # constant | sinusoidal | braking
/// lead_v0 = 15.0                # speed for constant, base for the others
/// lead_amplitude = 2.0          # sinusoidal
/// lead_period_s = 8.0           # sinusoidal
/// lead_decel = 1.0              # braking
/// lead_floor = 5.0              # braking
/// ego_profile = "constant"      # same keys with the ego_ prefix
/// ego_v0 = 15.0
/// initial_gap_m = 20.0
/// disparity_noise_px = 0.5
/// contamination = 0.3
/// background_distance_m = 120.0
/// lead_width_m = 1.8
/// steering_noise_deg = 2.0
/// seed = 0
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n_frames: Option<usize>,
    pub fps: Option<f64>,
    pub offset_m: Option<f64>,
    pub focal_length_px: Option<f64>,
    pub image_width: Option<usize>,
    pub image_height: Option<usize>,
    pub lead_profile: Option<String>,
    pub lead_v0: Option<f64>,
    pub lead_amplitude: Option<f64>,
    pub lead_period_s: Option<f64>,
    pub lead_decel: Option<f64>,
    pub lead_floor: Option<f64>,
    pub ego_profile: Option<String>,
    pub ego_v0: Option<f64>,
    pub ego_amplitude: Option<f64>,
    pub ego_period_s: Option<f64>,
    pub ego_decel: Option<f64>,
    pub ego_floor: Option<f64>,
    pub initial_gap_m: Option<f64>,
    pub disparity_noise_px: Option<f64>,
    pub contamination: Option<f64>,
    pub background_distance_m: Option<f64>,
    pub lead_width_m: Option<f64>,
    pub steering_noise_deg: Option<f64>,
    pub seed: Option<u64>,
}

fn profile_from(
    kind: Option<&str>,
    v0: Option<f64>,
    amplitude: Option<f64>,
    period_s: Option<f64>,
    decel: Option<f64>,
    floor: Option<f64>,
    default: VelocityProfile,
) -> Result<VelocityProfile> {
    let v0 = v0.unwrap_or_else(|| default.speed_at(0.0));
    Ok(match kind {
        None if [amplitude, period_s, decel, floor].iter().all(Option::is_none) => match default {
            VelocityProfile::Constant { .. } => VelocityProfile::Constant { v: v0 },
            other => other,
        },
        None | Some("constant") => VelocityProfile::Constant { v: v0 },
        Some("sinusoidal") => VelocityProfile::Sinusoidal {
            v0,
            amplitude: amplitude.unwrap_or(0.0),
            period_s: period_s.unwrap_or(10.0),
        },
        Some("braking") => VelocityProfile::Braking {
            v0,
            decel: decel.unwrap_or(0.0),
            floor: floor.unwrap_or(0.0),
        },
        Some(other) => {
            return Err(Error::ConfigInvalid(format!(
                "unknown profile {other:?} (expected constant, sinusoidal or braking)"
            )))
        }
    })
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigInvalid(format!("scenario file: {e}")))
    }

    pub fn to_config(&self) -> Result<ScenarioConfig> {
        let d = ScenarioConfig::default();
        let cfg = ScenarioConfig {
            n_frames: self.n_frames.unwrap_or(d.n_frames),
            fps: self.fps.unwrap_or(d.fps),
            rig: CameraRig {
                offset_m: self.offset_m.unwrap_or(d.rig.offset_m),
                focal_length_px: self.focal_length_px.unwrap_or(d.rig.focal_length_px),
            },
            image_width: self.image_width.unwrap_or(d.image_width),
            image_height: self.image_height.unwrap_or(d.image_height),
            lead: profile_from(
                self.lead_profile.as_deref(),
                self.lead_v0,
                self.lead_amplitude,
                self.lead_period_s,
                self.lead_decel,
                self.lead_floor,
                d.lead,
            )?,
            ego: profile_from(
                self.ego_profile.as_deref(),
                self.ego_v0,
                self.ego_amplitude,
                self.ego_period_s,
                self.ego_decel,
                self.ego_floor,
                d.ego,
            )?,
            initial_gap_m: self.initial_gap_m.unwrap_or(d.initial_gap_m),
            disparity_noise_px: self.disparity_noise_px.unwrap_or(d.disparity_noise_px),
            contamination: self.contamination.unwrap_or(d.contamination),
            background_distance_m: self.background_distance_m.unwrap_or(d.background_distance_m),
            lead_width_m: self.lead_width_m.unwrap_or(d.lead_width_m),
            steering_noise_deg: self.steering_noise_deg.unwrap_or(d.steering_noise_deg),
            rng_seed: self.seed.unwrap_or(d.rng_seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
