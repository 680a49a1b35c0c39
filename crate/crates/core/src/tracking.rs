//! Lead-vehicle box propagation.
//!
//! A tracker is initialised from the first-frame box and emits exactly one
//! box per frame. Two implementations sit behind [`LeadTracker`]:
//!
//! * [`NccTracker`]: a fixed-template tracker that searches a square window
//!   around the previous box for the offset maximising zero-mean normalized
//!   cross-correlation. Scale changes are not followed.
//! * [`OracleTracker`]: replays ground-truth boxes, isolating the distance and
//!   velocity stages from tracking error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Scene};

pub const DEFAULT_SEARCH_RADIUS_PX: usize = 32;

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ConfigInvalid(format!(
                "image holds {} values for {width}x{height}",
                values.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn crop(&self, b: BoundingBox) -> Result<GrayImage> {
        b.check_fits(self.width, self.height)?;
        let mut values = Vec::with_capacity(b.area());
        for y in b.y..b.y + b.h {
            let row = y * self.width;
            values.extend_from_slice(&self.values[row + b.x..row + b.x + b.w]);
        }
        Ok(GrayImage {
            width: b.w,
            height: b.h,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub template: GrayImage,
    pub last_box: BoundingBox,
    pub search_radius_px: usize,
    frame_width: usize,
    frame_height: usize,
    // sums over the template, cached for the correlation numerator
    t_sum: u64,
    t_var_n: u128,
}

/// Outcome of one tracking step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedBox {
    pub bbox: BoundingBox,
    /// Best NCC score, or `None` when the match was degenerate (flat template
    /// or no textured window in range) and the previous box was held.
    pub score: Option<f64>,
}

impl TrackedBox {
    pub fn degenerate(&self) -> bool {
        self.score.is_none()
    }
}

pub fn init_tracker(
    frame: &GrayImage,
    bbox: BoundingBox,
    search_radius_px: usize,
) -> Result<TrackerState> {
    if search_radius_px < 1 {
        return Err(Error::ConfigInvalid("search radius must be >= 1 px".into()));
    }
    let template = frame.crop(bbox)?;
    let n = template.values.len() as u128;
    let (sum, sum_sq) = template
        .values
        .iter()
        .fold((0u64, 0u64), |(s, q), &v| (s + v as u64, q + (v as u64) * (v as u64)));
    Ok(TrackerState {
        t_sum: sum,
        t_var_n: n * sum_sq as u128 - (sum as u128) * (sum as u128),
        template,
        last_box: bbox,
        search_radius_px,
        frame_width: frame.width,
        frame_height: frame.height,
    })
}

/// Summed-area tables of pixel values and squared values.
struct Integral {
    stride: usize,
    sum: Vec<u64>,
    sum_sq: Vec<u64>,
}

impl Integral {
    fn new(img: &GrayImage) -> Self {
        let stride = img.width + 1;
        let mut sum = vec![0u64; stride * (img.height + 1)];
        let mut sum_sq = sum.clone();
        for y in 0..img.height {
            let (mut row, mut row_sq) = (0u64, 0u64);
            for x in 0..img.width {
                let v = img.get(x, y) as u64;
                row += v;
                row_sq += v * v;
                let i = (y + 1) * stride + x + 1;
                sum[i] = sum[i - stride] + row;
                sum_sq[i] = sum_sq[i - stride] + row_sq;
            }
        }
        Integral {
            stride,
            sum,
            sum_sq,
        }
    }

    fn window(&self, x: usize, y: usize, w: usize, h: usize) -> (u64, u64) {
        let s = self.stride;
        let at = |t: &[u64]| t[(y + h) * s + x + w] + t[y * s + x] - t[y * s + x + w] - t[(y + h) * s + x];
        (at(&self.sum), at(&self.sum_sq))
    }
}

/// One step of the fixed-template search.
///
/// Candidates are every top-left corner within Chebyshev distance
/// `search_radius_px` of the previous box that keeps the box inside the
/// frame. Candidates are visited in ascending `(dy, dx)` order and only a
/// strictly better score replaces the incumbent, so ties resolve to the
/// smallest offset.
pub fn track_next(state: &TrackerState, frame: &GrayImage) -> Result<(TrackerState, TrackedBox)> {
    if (frame.width, frame.height) != (state.frame_width, state.frame_height) {
        return Err(Error::DimensionMismatch {
            expected_w: state.frame_width,
            expected_h: state.frame_height,
            actual_w: frame.width,
            actual_h: frame.height,
        });
    }
    let last = state.last_box;
    let hold = TrackedBox {
        bbox: last,
        score: None,
    };
    if state.t_var_n == 0 {
        return Ok((state.clone(), hold));
    }

    let (w, h) = (last.w, last.h);
    let r = state.search_radius_px;
    let x_lo = last.x.saturating_sub(r);
    let x_hi = (last.x + r).min(frame.width - w);
    let y_lo = last.y.saturating_sub(r);
    let y_hi = (last.y + r).min(frame.height - h);

    let integral = Integral::new(frame);
    let n = (w * h) as i128;
    let t_var = state.t_var_n as f64;
    let tpl = &state.template.values;

    let mut best: Option<(f64, usize, usize)> = None;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let (s, sq) = integral.window(x, y, w, h);
            let w_var = n * sq as i128 - (s as i128) * (s as i128);
            if w_var == 0 {
                continue;
            }
            let mut cross = 0u64;
            for ty in 0..h {
                let row = &frame.values[(y + ty) * frame.width + x..][..w];
                let trow = &tpl[ty * w..][..w];
                cross += row
                    .iter()
                    .zip(trow)
                    .map(|(&a, &b)| a as u64 * b as u64)
                    .sum::<u64>();
            }
            // n * sum(T*I) - sum(T) * sum(I) == n^2 * cov(T, I)
            let num = n * cross as i128 - state.t_sum as i128 * s as i128;
            let score = num as f64 / (t_var * w_var as f64).sqrt();
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, x, y));
            }
        }
    }

    Ok(match best {
        Some((score, x, y)) => {
            let bbox = BoundingBox::new(x, y, w, h);
            let mut next = state.clone();
            next.last_box = bbox;
            (
                next,
                TrackedBox {
                    bbox,
                    score: Some(score),
                },
            )
        }
        None => (state.clone(), hold),
    })
}

/// The ground-truth box of frame `idx`.
pub fn oracle_track(scene: &Scene, idx: usize) -> Result<BoundingBox> {
    let frame = scene.frames.get(idx).ok_or(Error::IndexOutOfRange {
        index: idx,
        len: scene.len(),
    })?;
    frame.lead_bbox.ok_or(Error::MissingGroundTruth(idx))
}

/// Produces one box per frame, starting from the frame-0 annotation.
pub trait LeadTracker {
    fn name(&self) -> &'static str;

    /// `images` are the per-frame tracking images; trackers that do not look
    /// at pixels accept `None`.
    fn track(&self, scene: &Scene, images: Option<&[GrayImage]>) -> Result<Vec<TrackedBox>>;
}

#[derive(Debug, Clone, Copy)]
pub struct NccTracker {
    pub search_radius_px: usize,
}

impl Default for NccTracker {
    fn default() -> Self {
        NccTracker {
            search_radius_px: DEFAULT_SEARCH_RADIUS_PX,
        }
    }
}

impl LeadTracker for NccTracker {
    fn name(&self) -> &'static str {
        "ncc"
    }

    fn track(&self, scene: &Scene, images: Option<&[GrayImage]>) -> Result<Vec<TrackedBox>> {
        let images = images.ok_or_else(|| {
            Error::ConfigInvalid("the ncc tracker needs the scene's tracking images".into())
        })?;
        if images.len() != scene.len() {
            return Err(Error::LengthMismatch {
                left: images.len(),
                right: scene.len(),
            });
        }
        let first = oracle_track(scene, 0)?;
        let mut state = init_tracker(&images[0], first, self.search_radius_px)?;
        let mut out = Vec::with_capacity(scene.len());
        out.push(TrackedBox {
            bbox: first,
            score: Some(1.0),
        });
        for (idx, img) in images.iter().enumerate().skip(1) {
            let (next, tracked) =
                track_next(&state, img).map_err(|e| e.in_scene(&scene.scene_id, Some(idx)))?;
            state = next;
            out.push(tracked);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleTracker;

impl LeadTracker for OracleTracker {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn track(&self, scene: &Scene, _images: Option<&[GrayImage]>) -> Result<Vec<TrackedBox>> {
        (0..scene.len())
            .map(|idx| {
                oracle_track(scene, idx)
                    .map(|bbox| TrackedBox {
                        bbox,
                        score: Some(1.0),
                    })
                    .map_err(|e| e.in_scene(&scene.scene_id, Some(idx)))
            })
            .collect()
    }
}

/// Tracker selection by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerKind {
    Ncc,
    Oracle,
}

impl TrackerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrackerKind::Ncc => "ncc",
            TrackerKind::Oracle => "oracle",
        }
    }

    pub fn build(self, search_radius_px: usize) -> Box<dyn LeadTracker + Send + Sync> {
        match self {
            TrackerKind::Ncc => Box::new(NccTracker { search_radius_px }),
            TrackerKind::Oracle => Box::new(OracleTracker),
        }
    }
}

impl fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrackerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ncc" => Ok(TrackerKind::Ncc),
            "oracle" => Ok(TrackerKind::Oracle),
            other => Err(Error::ConfigInvalid(format!(
                "unknown tracker {other:?} (expected ncc or oracle)"
            ))),
        }
    }
}
