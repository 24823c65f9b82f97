use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the rendering pipeline.
#[derive(Debug, Error)]
pub enum RainError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("failed to encode image: {0}")]
    Encode(String),

    #[error("expected a 3-channel raster, got {found}")]
    ChannelCount { found: String },

    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {found_w}x{found_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },

    #[error("depth map has no valid pixels")]
    AllInvalidDepth,

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("simulation volume is degenerate: {0}")]
    DegenerateFrustum(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("streak library: {0}")]
    StreakLibrary(String),

    #[error("pre-restoration image has zero mean luminosity")]
    ZeroMeanLuminosity,

    #[error("{image}: {source}")]
    Image {
        image: String,
        #[source]
        source: Box<RainError>,
    },
}

impl RainError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RainError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RainError::InvalidParameter(msg.into())
    }

    /// Attach the identity of the image being processed.
    pub fn for_image(self, image: impl Into<String>) -> Self {
        RainError::Image {
            image: image.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = RainError> = std::result::Result<T, E>;
