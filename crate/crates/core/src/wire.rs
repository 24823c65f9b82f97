//! JSON request and response bodies shared by the HTTP service and client.
//!
//! Rasters travel as base64-encoded files: PNG for images, PNG or the float
//! raster format for depth.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::batch::BatchSummary;
use crate::error::{RainError, Result};
use crate::physics::{DropClass, DropPopulation};
use crate::pipeline::{RenderOptions, RenderReport};
use crate::scene::depth::{decode_float_depth, decode_png_depth};
use crate::scene::{decode_image, CalibrationDoc, ColorSpace, DepthMap, ImageBuffer, RainfallConfig};

pub fn encode_b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn decode_b64(field: &str, text: &str) -> Result<Vec<u8>> {
    STANDARD
        .decode(text)
        .map_err(|e| RainError::invalid(format!("{field}: invalid base64: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthFormat {
    Png16,
    Float,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthPayload {
    /// Encoded depth file.
    Raster {
        format: DepthFormat,
        data_b64: String,
        /// Multiplier to meters.
        scale: f64,
    },
    /// Constant depth for every pixel.
    Uniform { meters: f32 },
}

impl DepthPayload {
    pub fn decode(&self, width: usize, height: usize) -> Result<DepthMap> {
        match self {
            DepthPayload::Uniform { meters } => DepthMap::uniform(width, height, *meters),
            DepthPayload::Raster {
                format,
                data_b64,
                scale,
            } => {
                let bytes = decode_b64("depth", data_b64)?;
                let name = Path::new("<request depth>");
                match format {
                    DepthFormat::Png16 => decode_png_depth(&bytes, *scale, name),
                    DepthFormat::Float => decode_float_depth(&bytes, *scale, name),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    /// sRGB PNG or JPEG, base64.
    pub image_b64: String,
    pub depth: DepthPayload,
    pub calibration: CalibrationDoc,
    /// Frame name for per-frame calibration overrides.
    #[serde(default)]
    pub frame: Option<String>,
    #[serde(default)]
    pub rainfall: RainfallConfig,
    #[serde(default)]
    pub options: RenderOptions,
    #[serde(default)]
    pub bits16: bool,
    /// Resample a depth raster whose size differs from the image.
    #[serde(default)]
    pub resample_depth: bool,
}

impl RenderRequest {
    pub fn decode_image(&self) -> Result<ImageBuffer> {
        decode_image(&decode_b64("image", &self.image_b64)?, ColorSpace::Srgb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    /// sRGB PNG, base64.
    pub image_b64: String,
    pub report: RenderReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub calibration: CalibrationDoc,
    #[serde(default)]
    pub frame: Option<String>,
    #[serde(default)]
    pub rainfall: RainfallConfig,
    /// Return every drop, not just the counts.
    #[serde(default)]
    pub include_drops: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub diameter_mm: f64,
    pub x0: [f64; 3],
    pub x1: [f64; 3],
    pub p0: Option<[f64; 2]>,
    pub p1: Option<[f64; 2]>,
    pub projected_width_px: f64,
    pub streak: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub rate_mm_hr: f64,
    pub seed: u64,
    pub volume_m3: f64,
    pub drop_count: usize,
    pub streak_count: usize,
    pub streak_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drops: Option<Vec<DropRecord>>,
}

impl SimulateResponse {
    pub fn from_population(p: &DropPopulation, include_drops: bool) -> Self {
        let drops = include_drops.then(|| {
            p.drops
                .iter()
                .map(|d| DropRecord {
                    diameter_mm: d.diameter_mm,
                    x0: d.x0.into(),
                    x1: d.x1.into(),
                    p0: d.p0.map(Into::into),
                    p1: d.p1.map(Into::into),
                    projected_width_px: d.projected_width_px,
                    streak: d.class == DropClass::Streak,
                })
                .collect()
        });
        Self {
            rate_mm_hr: p.rate_mm_hr,
            seed: p.seed,
            volume_m3: p.volume_m3,
            drop_count: p.drops.len(),
            streak_count: p.streak_count(),
            streak_fraction: p.streak_fraction(),
            drops,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: u64,
    pub state: JobState,
    pub done: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<BatchSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobAccepted {
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
