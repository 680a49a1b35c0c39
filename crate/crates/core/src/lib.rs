//! Lead-vehicle velocity estimation from stereo disparity.
//!
//! The pipeline runs in four stages: a tracker propagates the lead-vehicle
//! box from frame 0 ([`tracking`]), boxed disparities are reduced to one
//! distance per frame ([`distance`]), and gap arithmetic or a trained
//! regressor turns the distance trace into lead velocity ([`velocity`]).
//! [`eval`] scores combinations of the three stages. Scenes live on disk in
//! the layout described in [`dataset`], and [`synth`] renders scenes with
//! known ground truth.

pub mod config;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tracking;
pub mod velocity;

pub use error::{Error, ErrorKind, Result};
pub use model::{BoundingBox, CameraRig, DisparityMap, FrameRecord, Scene};
