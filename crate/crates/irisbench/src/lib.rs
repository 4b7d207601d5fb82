//! Iris obfuscation benchmark harness.
//!
//! Implements five iris obfuscation methods — Gaussian blurring, Gaussian
//! noising, downsampling, rubber-sheet iris swapping, and iris style
//! transfer — together with the evaluation machinery needed to measure their
//! privacy/utility/attack-risk trade-offs on a synthetic eye dataset:
//!
//! - [`imagecore`] — raster primitives: convolution, resampling, seeded
//!   noise, masked compositing, PNG/PGM I/O.
//! - [`synthgen`] — procedural labeled eye-image generator (identity-seeded
//!   iris texture, glints, gaze labels, exact segmentation ground truth).
//! - [`segmentation`] — annulus fitting, glint detection, IoU, and a
//!   heuristic proxy segmenter whose accuracy depends on image fidelity.
//! - [`obfuscation`] — the five methods plus the glint-preserving pipeline
//!   that applies any of them to the iris region of an eye image.
//! - [`recognition`] — Gabor iris-code matcher (c1) and style-statistics
//!   classifier (c2), identification accuracy and false acceptance rate.
//! - [`gaze`] — model-based gaze estimation from pupil/glint landmarks and
//!   the angular-error metric.
//! - [`bench`] — the full parameter sweep, runtime measurement, and CSV /
//!   markdown report emission.
//!
//! Everything is deterministic given explicit seeds; no ambient randomness.

pub mod bench;
pub mod gaze;
pub mod imagecore;
pub mod obfuscation;
pub mod recognition;
pub mod segmentation;
pub mod synthgen;

mod linalg;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Mask did not contain enough structure to fit the iris geometry,
    /// or the heuristic segmenter found no pupil.
    #[error("segmentation failure: {0}")]
    SegmentationFailure(String),
    /// Landmark features could not be extracted (missing pupil or glint).
    #[error("feature failure: {0}")]
    FeatureFailure(String),
    /// Model fitting failed (rank-deficient design matrix).
    #[error("fit failure: {0}")]
    FitFailure(String),
    /// Operation invoked on an object in an unusable state (e.g. empty gallery).
    #[error("invalid state: {0}")]
    InvalidState(String),
    /// Sample rejected: too few valid iris-code cells.
    #[error("insufficient iris texture: {0}")]
    InsufficientTexture(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    /// Configuration file could not be parsed.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
