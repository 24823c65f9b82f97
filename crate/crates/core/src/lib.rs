//! Physically based rain rendering for clear-weather images.
//!
//! Given an sRGB image, its depth map and camera calibration, [`render_rain`]
//! simulates raindrops for a rainfall rate, attenuates the scene with a fog
//! layer for sub-pixel drops, composites motion-blurred streaks lit by an
//! environment map estimated from the image, and restores the original mean
//! luminosity. [`run_batch`] drives whole datasets.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod error;
pub mod fog;
pub mod illumination;
pub mod physics;
pub mod pipeline;
pub mod scene;
pub mod streak;
pub mod wire;

pub use batch::{run_batch, BatchProgress, BatchSummary, JobConfig, ReportRecord};
pub use error::{RainError, Result};
pub use pipeline::{render_rain, render_rain_detailed, RenderOptions, RenderReport, StreakSource};
pub use scene::{CameraModel, DepthMap, ImageBuffer, RainfallConfig};
