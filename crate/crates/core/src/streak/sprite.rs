use std::collections::BTreeMap;
use std::path::Path;

use ::image::DynamicImage;
use rand::Rng;

use crate::error::{RainError, Result};

/// Time a drop of the streak database stays on one pixel: `sqrt(1e-3) / 50` s.
pub const TAU0_S: f64 = 0.000_632_455_532_033_675_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpriteSource {
    Database,
    Procedural,
}

/// Grayscale streak image with its alpha. The streak axis runs down the
/// middle column, from the top edge (shutter open) to the bottom edge.
#[derive(Debug, Clone, PartialEq)]
pub struct StreakSprite {
    pub width: usize,
    pub height: usize,
    /// Linear radiance in [0, 1], row major.
    pub radiance: Vec<f32>,
    /// Coverage in [0, 1], row major.
    pub alpha: Vec<f32>,
    pub diameter_mm: f64,
    pub oscillation: usize,
    pub source: SpriteSource,
    /// Raster width divided by the drop width it depicts.
    pub footprint_scale: f64,
}

impl StreakSprite {
    /// Build from a black-background intensity raster; radiance and alpha are
    /// both the max-normalized intensity.
    pub fn from_intensity(
        width: usize,
        height: usize,
        intensity: Vec<f32>,
        diameter_mm: f64,
        oscillation: usize,
        source: SpriteSource,
        footprint_scale: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 || intensity.len() != width * height {
            return Err(RainError::StreakLibrary(format!(
                "sprite buffer of {} samples does not match {width}x{height}",
                intensity.len()
            )));
        }
        let max = intensity.iter().copied().fold(0.0f32, f32::max);
        let normalized: Vec<f32> = if max > 0.0 {
            intensity.iter().map(|v| (v / max).clamp(0.0, 1.0)).collect()
        } else {
            vec![0.0; intensity.len()]
        };
        Ok(Self {
            width,
            height,
            alpha: normalized.clone(),
            radiance: normalized,
            diameter_mm,
            oscillation,
            source,
            footprint_scale,
        })
    }

    #[inline]
    pub fn radiance_at(&self, x: usize, y: usize) -> f32 {
        self.radiance[y * self.width + x]
    }

    #[inline]
    pub fn alpha_at(&self, x: usize, y: usize) -> f32 {
        self.alpha[y * self.width + x]
    }
}

/// Streak images bucketed by drop diameter.
#[derive(Debug, Clone)]
pub struct StreakLibrary {
    /// Keyed by diameter in micrometres so the map is ordered.
    buckets: BTreeMap<u64, Vec<StreakSprite>>,
    pub tau0_s: f64,
}

impl StreakLibrary {
    pub fn new(sprites: Vec<StreakSprite>) -> Result<Self> {
        if sprites.is_empty() {
            return Err(RainError::StreakLibrary("no sprites".into()));
        }
        let mut buckets: BTreeMap<u64, Vec<StreakSprite>> = BTreeMap::new();
        for s in sprites {
            buckets
                .entry((s.diameter_mm * 1000.0).round() as u64)
                .or_default()
                .push(s);
        }
        for bucket in buckets.values_mut() {
            bucket.sort_by_key(|s| s.oscillation);
        }
        Ok(Self {
            buckets,
            tau0_s: TAU0_S,
        })
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn diameters_mm(&self) -> Vec<f64> {
        self.buckets.keys().map(|k| *k as f64 / 1000.0).collect()
    }

    /// All oscillations of the bucket closest to `diameter_mm` (ties go to
    /// the smaller diameter).
    pub fn nearest(&self, diameter_mm: f64) -> &[StreakSprite] {
        let key = (diameter_mm * 1000.0).round().max(0.0) as u64;
        let below = self.buckets.range(..=key).next_back();
        let above = self.buckets.range(key..).next();
        let pick = match (below, above) {
            (Some(b), Some(a)) => {
                if key - b.0 <= a.0 - key {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("library is never empty"),
        };
        pick.1
    }

    /// Nearest-diameter bucket, random oscillation.
    pub fn select<R: Rng + ?Sized>(&self, diameter_mm: f64, rng: &mut R) -> &StreakSprite {
        let bucket = self.nearest(diameter_mm);
        &bucket[rng.random_range(0..bucket.len())]
    }
}

/// Load `<dir>/<diameter_mm>_<oscillation>.png` grayscale sprites.
pub fn load_streak_library(dir: &Path) -> Result<StreakLibrary> {
    let entries = std::fs::read_dir(dir).map_err(|e| crate::RainError::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    let mut sprites = Vec::with_capacity(paths.len());
    for path in paths {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some((diam, osc)) = stem.split_once('_') else {
            return Err(RainError::StreakLibrary(format!(
                "{} is not named <diameter_mm>_<oscillation>.png",
                path.display()
            )));
        };
        let (Ok(diameter_mm), Ok(oscillation)) = (diam.parse::<f64>(), osc.parse::<usize>()) else {
            return Err(RainError::StreakLibrary(format!(
                "cannot parse diameter/oscillation from {}",
                path.display()
            )));
        };
        let bytes = std::fs::read(&path).map_err(|e| RainError::io(&path, e))?;
        let img = ::image::load_from_memory(&bytes).map_err(|e| RainError::Decode {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let intensity: Vec<f32> = match img {
            DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
            DynamicImage::ImageLuma16(b) => {
                b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()
            }
            other => other
                .to_luma32f()
                .into_raw(),
        };
        sprites.push(StreakSprite::from_intensity(
            w,
            h,
            intensity,
            diameter_mm,
            oscillation,
            SpriteSource::Database,
            1.0,
        )?);
    }
    if sprites.is_empty() {
        return Err(RainError::StreakLibrary(format!(
            "no sprites found in {}",
            dir.display()
        )));
    }
    StreakLibrary::new(sprites)
}

/// Synthetic streak for when no database is available: a vertical stroke
/// with a Gaussian cross-section (sigma = width/3) that sways sinusoidally.
///
/// The raster is about twice the drop width so the sway never clips the
/// profile; `footprint_scale` records that ratio for the warp.
pub fn procedural_streak(
    diameter_mm: f64,
    length_px: f64,
    width_px: f64,
    oscillation_seed: u64,
) -> Result<StreakSprite> {
    if !(length_px >= 1.0 && width_px >= 1.0) {
        return Err(RainError::invalid(format!(
            "procedural streak needs length and width >= 1 px, got {length_px} x {width_px}"
        )));
    }
    let mut rng = crate::physics::seeded_rng(oscillation_seed);
    let amplitude = rng.random::<f64>() * width_px / 4.0;
    let periods = rng.random_range(1..=3) as f64;
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    procedural_with_sway(diameter_mm, length_px, width_px, amplitude, periods, phase, oscillation_seed)
}

pub(crate) fn procedural_with_sway(
    diameter_mm: f64,
    length_px: f64,
    width_px: f64,
    amplitude: f64,
    periods: f64,
    phase: f64,
    oscillation: u64,
) -> Result<StreakSprite> {
    const SUBSAMPLES: usize = 8;
    let height = length_px.ceil() as usize;
    let mut width = (2.0 * width_px).ceil() as usize;
    if width.is_multiple_of(2) {
        width += 1;
    }
    let width = width.max(3);
    let sigma = width_px / 3.0;
    let centre = width as f64 / 2.0;
    let mut intensity = Vec::with_capacity(width * height);
    for y in 0..height {
        let t = (y as f64 + 0.5) / height as f64;
        let c = centre + amplitude * (std::f64::consts::TAU * periods * t + phase).sin();
        for x in 0..width {
            let mut acc = 0.0;
            for s in 0..SUBSAMPLES {
                let px = x as f64 + (s as f64 + 0.5) / SUBSAMPLES as f64;
                acc += (-(px - c).powi(2) / (2.0 * sigma * sigma)).exp();
            }
            intensity.push((acc / SUBSAMPLES as f64) as f32);
        }
    }
    StreakSprite::from_intensity(
        width,
        height,
        intensity,
        diameter_mm,
        oscillation as usize,
        SpriteSource::Procedural,
        width as f64 / width_px,
    )
}
