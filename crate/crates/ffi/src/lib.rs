//! C ABI over the leadvel pipeline.
//!
//! Every fallible function returns an [`LvStatus`]; on failure the message
//! is available from [`lv_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::OnceLock;

use leadvel::dataset::{load_scene, load_tracking_images};
use leadvel::distance::{DistanceConfig, Estimator};
use leadvel::eval::metrics::rmse;
use leadvel::tracking::{GrayImage, TrackerKind, DEFAULT_SEARCH_RADIUS_PX};
use leadvel::velocity::{predict_scene, relative_velocity, Predictor, TrainedModel};
use leadvel::{Error, ErrorKind, Scene};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LvStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// Bad enum value, non-UTF-8 path or invalid configuration.
    InvalidArgument = 2,
    /// The output buffer holds fewer elements than the result.
    BufferTooSmall = 3,
    /// Missing or malformed input data.
    DataError = 4,
    /// A bug in the library, including a caught panic.
    InternalError = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LvTracker {
    Oracle = 0,
    Ncc = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LvEstimator {
    Mode = 0,
    Kde = 1,
    Resampled = 2,
}

/// A loaded scene directory.
pub struct LvScene {
    scene: Scene,
    dir: PathBuf,
    images: OnceLock<Vec<GrayImage>>,
}

/// A trained velocity regressor.
pub struct LvModel {
    model: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: LvStatus, msg: impl Into<String>) -> LvStatus {
    set_last_error(msg.into());
    status
}

fn from_error(e: Error) -> LvStatus {
    let status = match e.kind() {
        ErrorKind::Usage => LvStatus::InvalidArgument,
        ErrorKind::Data => LvStatus::DataError,
        ErrorKind::Internal => LvStatus::InternalError,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting panics into `InternalError`.
fn guard(f: impl FnOnce() -> LvStatus) -> LvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(LvStatus::InternalError, format!("internal error: {msg}"))
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, LvStatus> {
    if p.is_null() {
        return Err(fail(LvStatus::NullArgument, "path is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(LvStatus::InvalidArgument, "path is not UTF-8"))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize) -> Result<&'a [f64], LvStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(LvStatus::NullArgument, "input buffer is NULL"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write_out(values: &[f64], out: *mut f64, capacity: usize) -> LvStatus {
    if out.is_null() {
        return fail(LvStatus::NullArgument, "output buffer is NULL");
    }
    if capacity < values.len() {
        return fail(
            LvStatus::BufferTooSmall,
            format!("output holds {capacity} values, need {}", values.len()),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    LvStatus::Ok
}

fn estimator(raw: u32) -> Result<Estimator, LvStatus> {
    match raw {
        x if x == LvEstimator::Mode as u32 => Ok(Estimator::Mode),
        x if x == LvEstimator::Kde as u32 => Ok(Estimator::Kde),
        x if x == LvEstimator::Resampled as u32 => Ok(Estimator::Resampled),
        x => Err(fail(LvStatus::InvalidArgument, format!("unknown estimator {x}"))),
    }
}

fn tracker(raw: u32) -> Result<TrackerKind, LvStatus> {
    match raw {
        x if x == LvTracker::Oracle as u32 => Ok(TrackerKind::Oracle),
        x if x == LvTracker::Ncc as u32 => Ok(TrackerKind::Ncc),
        x => Err(fail(LvStatus::InvalidArgument, format!("unknown tracker {x}"))),
    }
}

fn distance_config(raw: u32) -> Result<DistanceConfig, LvStatus> {
    estimator(raw).map(|e| DistanceConfig::default().with_estimator(e))
}

impl LvScene {
    fn boxes(&self, kind: TrackerKind) -> leadvel::Result<Vec<leadvel::BoundingBox>> {
        let images = match kind {
            TrackerKind::Ncc => Some(match self.images.get() {
                Some(imgs) => imgs.as_slice(),
                None => {
                    let imgs = load_tracking_images(&self.dir)?;
                    self.images.get_or_init(|| imgs).as_slice()
                }
            }),
            TrackerKind::Oracle => None,
        };
        let tracked = kind.build(DEFAULT_SEARCH_RADIUS_PX).track(&self.scene, images)?;
        Ok(tracked.into_iter().map(|t| t.bbox).collect())
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a scene directory (`scene.json` plus rasters).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lv_scene_load(path: *const c_char, out: *mut *mut LvScene) -> LvStatus {
    guard(|| {
        if out.is_null() {
            return fail(LvStatus::NullArgument, "out is NULL");
        }
        *out = ptr::null_mut();
        let dir = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_scene(dir) {
            Ok(scene) => {
                *out = Box::into_raw(Box::new(LvScene {
                    scene,
                    dir: dir.to_path_buf(),
                    images: OnceLock::new(),
                }));
                LvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scene` must come from [`lv_scene_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lv_scene_free(scene: *mut LvScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of frames; 0 for NULL.
///
/// # Safety
/// `scene` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lv_scene_frame_count(scene: *const LvScene) -> usize {
    scene.as_ref().map_or(0, |s| s.scene.len())
}

/// Ground-truth lead velocity per frame. Fails with `DataError` if any
/// frame lacks it.
///
/// # Safety
/// `scene` must be a live handle and `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn lv_scene_truth(scene: *const LvScene, out: *mut f64, capacity: usize) -> LvStatus {
    guard(|| {
        let Some(s) = scene.as_ref() else {
            return fail(LvStatus::NullArgument, "scene is NULL");
        };
        match s.scene.lead_velocity_truth() {
            Some(v) => write_out(&v, out, capacity),
            None => fail(LvStatus::DataError, "scene has no lead velocity ground truth"),
        }
    })
}

/// Per-frame lead distance in metres. `tracker_kind` is an [`LvTracker`]
/// and `estimator_kind` an [`LvEstimator`] value.
///
/// # Safety
/// `scene` must be a live handle and `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn lv_scene_distances(
    scene: *const LvScene,
    tracker_kind: u32,
    estimator_kind: u32,
    out: *mut f64,
    capacity: usize,
) -> LvStatus {
    guard(|| {
        let Some(s) = scene.as_ref() else {
            return fail(LvStatus::NullArgument, "scene is NULL");
        };
        let (kind, cfg) = match (tracker(tracker_kind), distance_config(estimator_kind)) {
            (Ok(k), Ok(c)) => (k, c),
            (Err(st), _) | (_, Err(st)) => return st,
        };
        let trace = s
            .boxes(kind)
            .and_then(|b| leadvel::distance::estimate_distance_trace(&s.scene, &b, &cfg));
        match trace {
            Ok(t) => write_out(&t.distances_m, out, capacity),
            Err(e) => from_error(e),
        }
    })
}

/// Per-frame lead velocity. A NULL `model` selects gap arithmetic; the
/// kind arguments are as for [`lv_scene_distances`].
///
/// # Safety
/// `scene` must be a live handle, `model` NULL or a live handle, and `out`
/// must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn lv_scene_predict(
    scene: *const LvScene,
    model: *const LvModel,
    tracker_kind: u32,
    estimator_kind: u32,
    out: *mut f64,
    capacity: usize,
) -> LvStatus {
    guard(|| {
        let Some(s) = scene.as_ref() else {
            return fail(LvStatus::NullArgument, "scene is NULL");
        };
        let predictor = model.as_ref().map_or(Predictor::Relvel, |m| Predictor::Trained(&m.model));
        let (kind, cfg) = match (tracker(tracker_kind), distance_config(estimator_kind)) {
            (Ok(k), Ok(c)) => (k, c),
            (Err(st), _) | (_, Err(st)) => return st,
        };
        let pred = s
            .boxes(kind)
            .and_then(|b| predict_scene(&s.scene, &b, &cfg, predictor));
        match pred {
            Ok(p) => write_out(&p.lead_velocity_mps, out, capacity),
            Err(e) => from_error(e),
        }
    })
}

/// Aggregates one box worth of per-pixel distances into a single estimate.
/// `estimator_kind` is an [`LvEstimator`] value.
///
/// # Safety
/// `samples` must hold `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lv_estimate_distance(
    estimator_kind: u32,
    samples: *const f64,
    n: usize,
    out: *mut f64,
) -> LvStatus {
    guard(|| {
        if out.is_null() {
            return fail(LvStatus::NullArgument, "out is NULL");
        }
        let values = match slice_arg(samples, n) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let cfg = match distance_config(estimator_kind) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match cfg.estimate(values) {
            Ok(d) => {
                *out = d;
                LvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// `v_ego + (d_curr - d_prev) / dt`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lv_relative_velocity(
    d_prev_m: f64,
    d_curr_m: f64,
    dt_s: f64,
    v_ego_mps: f64,
    out: *mut f64,
) -> LvStatus {
    guard(|| {
        if out.is_null() {
            return fail(LvStatus::NullArgument, "out is NULL");
        }
        match relative_velocity(d_prev_m, d_curr_m, dt_s, v_ego_mps) {
            Ok(v) => {
                *out = v;
                LvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads a model file written by `leadvel train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lv_model_load(path: *const c_char, out: *mut *mut LvModel) -> LvStatus {
    guard(|| {
        if out.is_null() {
            return fail(LvStatus::NullArgument, "out is NULL");
        }
        *out = ptr::null_mut();
        let file = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(file) {
            Ok(t) => t,
            Err(e) => return fail(LvStatus::DataError, format!("{}: {e}", file.display())),
        };
        match TrainedModel::from_json(&text) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(LvModel { model }));
                LvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must come from [`lv_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lv_model_free(model: *mut LvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of lagged velocity features the model expects; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lv_model_lags(model: *const LvModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.lags)
}

/// Root-mean-square error of `n` predictions against `n` truths.
///
/// # Safety
/// `predictions` and `truths` must hold `n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn lv_rmse(predictions: *const f64, truths: *const f64, n: usize, out: *mut f64) -> LvStatus {
    guard(|| {
        if out.is_null() {
            return fail(LvStatus::NullArgument, "out is NULL");
        }
        let (p, t) = match (slice_arg(predictions, n), slice_arg(truths, n)) {
            (Ok(p), Ok(t)) => (p, t),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match rmse(p, t) {
            Ok(r) => {
                *out = r;
                LvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
