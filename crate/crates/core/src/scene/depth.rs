use std::collections::VecDeque;
use std::path::Path;

use ::image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{RainError, Result};

/// On-disk depth representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthEncoding {
    /// Single-channel 16-bit PNG; meters = value * scale.
    Png16Scaled,
    /// Little-endian `u32 width, u32 height` header followed by `f32` samples.
    FloatRaster,
}

impl DepthEncoding {
    /// Guess the encoding from a file extension (`.png` or `.f32`/`.bin`/`.raw`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(Self::Png16Scaled),
            "f32" | "bin" | "raw" => Some(Self::FloatRaster),
            _ => None,
        }
    }
}

/// Per-pixel metric depth in meters. Every sample is finite and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthMap {
    /// Build from raw samples, filling zero/negative/non-finite pixels from
    /// their nearest valid neighbor.
    pub fn from_raw(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(RainError::invalid(format!(
                "depth buffer of {} samples does not match {width}x{height}",
                data.len()
            )));
        }
        fill_invalid(width, height, &mut data)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn uniform(width: usize, height: usize, meters: f32) -> Result<Self> {
        Self::from_raw(width, height, vec![meters; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Nearest-neighbor resample to a new size.
    pub fn resample_nearest(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(RainError::invalid("resample target is empty"));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                data.push(self.at(sx.min(self.width - 1), sy.min(self.height - 1)));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Make the depth match an image of `width`x`height`, resampling only
    /// when allowed.
    pub fn matched_to(self, width: usize, height: usize, resample: bool) -> Result<Self> {
        if self.width == width && self.height == height {
            return Ok(self);
        }
        if !resample {
            return Err(RainError::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                found_w: self.width,
                found_h: self.height,
            });
        }
        self.resample_nearest(width, height)
    }
}

fn is_valid(v: f32) -> bool {
    v.is_finite() && v > 0.0
}

/// Multi-source BFS from every valid pixel; each hole takes the value of
/// the first valid pixel that reaches it.
fn fill_invalid(width: usize, height: usize, data: &mut [f32]) -> Result<()> {
    let mut queue: VecDeque<usize> = data
        .iter()
        .enumerate()
        .filter(|(_, v)| is_valid(**v))
        .map(|(i, _)| i)
        .collect();
    if queue.is_empty() {
        return Err(RainError::AllInvalidDepth);
    }
    if queue.len() == data.len() {
        return Ok(());
    }
    let mut filled: Vec<bool> = data.iter().map(|v| is_valid(*v)).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % width, i / width);
        let v = data[i];
        let mut visit = |j: usize| {
            if !filled[j] {
                filled[j] = true;
                data[j] = v;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < width {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - width);
        }
        if y + 1 < height {
            visit(i + width);
        }
    }
    Ok(())
}

/// Load a depth file. `scale` converts stored units to meters.
pub fn load_depth(path: &Path, encoding: DepthEncoding, scale: f64) -> Result<DepthMap> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(RainError::invalid(format!("depth scale {scale} must be positive")));
    }
    let bytes = std::fs::read(path).map_err(|e| RainError::io(path, e))?;
    match encoding {
        DepthEncoding::Png16Scaled => decode_png_depth(&bytes, scale, path),
        DepthEncoding::FloatRaster => decode_float_depth(&bytes, scale, path),
    }
}

pub(crate) fn decode_png_depth(bytes: &[u8], scale: f64, path: &Path) -> Result<DepthMap> {
    let img = ::image::load_from_memory(bytes).map_err(|e| RainError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| (v as f64 * scale) as f32)
            .collect(),
        DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| (v as f64 * scale) as f32)
            .collect(),
        other => {
            return Err(RainError::ChannelCount {
                found: format!("{:?} (depth must be single-channel)", other.color()),
            })
        }
    };
    DepthMap::from_raw(w, h, data)
}

pub(crate) fn decode_float_depth(bytes: &[u8], scale: f64, path: &Path) -> Result<DepthMap> {
    let bad = |message: String| RainError::Decode {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 8 {
        return Err(bad("float raster shorter than its header".into()));
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != w * h * 4 {
        return Err(bad(format!(
            "float raster header says {w}x{h} but body has {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| (f32::from_le_bytes(b.try_into().unwrap()) as f64 * scale) as f32)
        .collect();
    DepthMap::from_raw(w, h, data)
}

/// Serialize to the float raster layout read by [`load_depth`].
pub fn encode_float_raster(depth: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + depth.data.len() * 4);
    out.extend_from_slice(&(depth.width as u32).to_le_bytes());
    out.extend_from_slice(&(depth.height as u32).to_le_bytes());
    for v in &depth.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
