use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variants are grouped by the stage that raises them; [`Error::kind`] folds
/// them into the three classes the CLI maps onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    // dataset I/O
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("malformed JSON at line {line}, column {column}: {reason}")]
    MalformedJson { line: usize, column: usize, reason: String },
    #[error("raster {file}: declared {declared_w}x{declared_h}, decoded {actual_w}x{actual_h}")]
    RasterShapeMismatch {
        file: String,
        declared_w: usize,
        declared_h: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error("scene violates {} invariant(s): {}", .0.len(), format_violations(.0))]
    InvariantViolation(Vec<Violation>),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("PGM: bad magic (expected P5)")]
    BadMagic,
    #[error("PGM: unsupported maxval {found} (expected {expected})")]
    BadMaxval { found: u32, expected: u32 },
    #[error("PGM: malformed header: {0}")]
    BadHeader(String),
    #[error("PGM: payload truncated (need {needed} bytes, have {available})")]
    TruncatedPayload { needed: usize, available: usize },

    // tracking
    #[error("box ({x},{y},{w},{h}) does not fit a {width}x{height} raster")]
    BoxOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("frame is {actual_w}x{actual_h}, tracker was initialised on {expected_w}x{expected_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error("frame {0} has no ground-truth box")]
    MissingGroundTruth(usize),

    // distance estimation
    #[error("no valid disparity pixels inside the box")]
    NoValidPixels,
    #[error("no distance samples")]
    EmptySamples,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    // velocity model
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("feature vector has length {got}, model expects {expected}")]
    FeatureLengthMismatch { expected: usize, got: usize },
    #[error("unsupported model format: {0}")]
    ModelFormat(String),

    // configuration / evaluation
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("length mismatch: {left} predictions vs {right} truths")]
    LengthMismatch { left: usize, right: usize },
    #[error("nothing to evaluate: {0}")]
    Empty(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("CSV: {0}")]
    Csv(String),

    #[error("scene {scene}{}: {source}", frame.map(|f| format!(", frame {f}")).unwrap_or_default())]
    Context {
        scene: String,
        frame: Option<usize>,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Internal,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_scene(self, scene: &str, frame: Option<usize>) -> Self {
        Error::Context {
            scene: scene.to_owned(),
            frame,
            source: Box::new(self),
        }
    }

    /// The innermost error, with scene/frame context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::ConfigInvalid(_) => ErrorKind::Usage,
            Error::IndexOutOfRange { .. } => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
