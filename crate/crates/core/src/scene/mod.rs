//! Shared data types: rasters, depth, camera calibration and rain settings.
//!
//! All radiometric values are linear RGB in `[0, 1]`. sRGB only appears at
//! the file boundary (decode on load, encode on save).

mod camera;
pub(crate) mod depth;
mod image;
mod rainfall;

pub use camera::{load_calibration, parse_calibration, CalibrationDoc, CameraModel, FrameOverride};
pub use depth::{encode_float_raster, load_depth, DepthEncoding, DepthMap};
pub use image::{
    decode_image, linear_to_srgb, load_image, srgb_to_linear, ColorSpace, ImageBuffer, OutputBits,
};
pub use rainfall::RainfallConfig;
