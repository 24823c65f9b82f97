use std::io::Cursor;
use std::path::Path;

use ::image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{RainError, Result};

/// Transfer function of the stored file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    #[default]
    Srgb,
    Linear,
}

/// Bit depth of encoded PNG output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutputBits {
    #[default]
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Interleaved linear-RGB raster, row major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        check_extent(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Wrap an interleaved RGB buffer; every sample must be finite and in `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_extent(width, height)?;
        if data.len() != width * height * 3 {
            return Err(RainError::invalid(format!(
                "buffer holds {} samples, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(RainError::invalid(format!(
                "sample {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        check_extent(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
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

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Per-channel mean. Summed row by row in a fixed order so the result
    /// never depends on thread scheduling.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        for row in self.data.chunks_exact(self.width * 3) {
            let mut r = [0.0f64; 3];
            for px in row.chunks_exact(3) {
                r[0] += px[0] as f64;
                r[1] += px[1] as f64;
                r[2] += px[2] as f64;
            }
            for c in 0..3 {
                acc[c] += r[c];
            }
        }
        let n = (self.width * self.height) as f64;
        acc.map(|v| v / n)
    }

    /// Mean over all pixels and channels.
    pub fn mean(&self) -> f64 {
        let m = self.channel_means();
        (m[0] + m[1] + m[2]) / 3.0
    }

    /// Mean of the rows in `[y0, y1)`.
    pub(crate) fn band_mean(&self, y0: usize, y1: usize) -> [f64; 3] {
        let y1 = y1.min(self.height).max(y0 + 1);
        let mut acc = [0.0f64; 3];
        for y in y0..y1 {
            for x in 0..self.width {
                let p = self.pixel(x, y);
                for c in 0..3 {
                    acc[c] += p[c] as f64;
                }
            }
        }
        let n = ((y1 - y0) * self.width) as f64;
        acc.map(|v| v / n)
    }

    pub fn to_png_bytes(&self, bits: OutputBits, color_space: ColorSpace) -> Result<Vec<u8>> {
        let encode = |v: f32| -> f64 {
            let v = (v as f64).clamp(0.0, 1.0);
            match color_space {
                ColorSpace::Srgb => linear_to_srgb(v),
                ColorSpace::Linear => v,
            }
        };
        let (w, h) = (self.width as u32, self.height as u32);
        let img = match bits {
            OutputBits::Eight => {
                let raw: Vec<u8> = self
                    .data
                    .iter()
                    .map(|&v| (encode(v) * 255.0).round() as u8)
                    .collect();
                DynamicImage::ImageRgb8(
                    ::image::RgbImage::from_raw(w, h, raw)
                        .ok_or_else(|| RainError::Encode("raster size".into()))?,
                )
            }
            OutputBits::Sixteen => {
                let raw: Vec<u16> = self
                    .data
                    .iter()
                    .map(|&v| (encode(v) * 65535.0).round() as u16)
                    .collect();
                DynamicImage::ImageRgb16(
                    ::image::ImageBuffer::from_raw(w, h, raw)
                        .ok_or_else(|| RainError::Encode("raster size".into()))?,
                )
            }
        };
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
            .map_err(|e| RainError::Encode(e.to_string()))?;
        Ok(out)
    }

    pub fn save_png(&self, path: &Path, bits: OutputBits, color_space: ColorSpace) -> Result<()> {
        let bytes = self.to_png_bytes(bits, color_space)?;
        std::fs::write(path, bytes).map_err(|e| RainError::io(path, e))
    }
}

fn check_extent(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(RainError::invalid(format!(
            "raster must be non-empty, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Decode an in-memory 8/16-bit RGB raster into linear RGB.
pub fn decode_image(bytes: &[u8], color_space: ColorSpace) -> Result<ImageBuffer> {
    decode_named(bytes, color_space, Path::new("<memory>"))
}

pub fn load_image(path: &Path, color_space: ColorSpace) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| RainError::io(path, e))?;
    decode_named(&bytes, color_space, path)
}

fn decode_named(bytes: &[u8], color_space: ColorSpace, path: &Path) -> Result<ImageBuffer> {
    let img = ::image::load_from_memory(bytes).map_err(|e| RainError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        DynamicImage::ImageRgb8(buf) => {
            let lut: Vec<f32> = (0..=255u8)
                .map(|v| decode_sample(v as f64 / 255.0, color_space))
                .collect();
            buf.into_raw().into_iter().map(|v| lut[v as usize]).collect()
        }
        DynamicImage::ImageRgb16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| decode_sample(v as f64 / 65535.0, color_space))
            .collect(),
        other => {
            return Err(RainError::ChannelCount {
                found: format!("{:?}", other.color()),
            })
        }
    };
    ImageBuffer::from_vec(w, h, data)
}

fn decode_sample(v: f64, color_space: ColorSpace) -> f32 {
    match color_space {
        ColorSpace::Srgb => srgb_to_linear(v) as f32,
        ColorSpace::Linear => v as f32,
    }
}
