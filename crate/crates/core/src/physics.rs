//! Raindrop particle simulation.
//!
//! Drops larger than `d_min` are sampled from a Marshall-Palmer size
//! distribution inside the (padded) camera frustum, moved at their terminal
//! fall velocity relative to the moving camera over the exposure, and
//! projected to the image. Drops covering less than one pixel are
//! classified fog-like and left to the fog layer.

use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{RainError, Result};
use crate::scene::{CameraModel, RainfallConfig};

/// Marshall-Palmer intercept, drops per m^3 per mm.
pub const MP_N0: f64 = 8000.0;

/// Deterministic generator used for every seeded stage.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Slope of the Marshall-Palmer distribution, per mm: `4.1 R^-0.21`.
pub fn marshall_palmer_lambda(rate_mm_hr: f64) -> Result<f64> {
    if !(rate_mm_hr > 0.0 && rate_mm_hr.is_finite()) {
        return Err(RainError::invalid(format!(
            "Marshall-Palmer slope needs R > 0, got {rate_mm_hr}"
        )));
    }
    Ok(4.1 * rate_mm_hr.powf(-0.21))
}

/// Number of drops per m^3 with diameter above `d_min_mm`.
pub fn drop_concentration(rate_mm_hr: f64, d_min_mm: f64) -> Result<f64> {
    if !(d_min_mm > 0.0) {
        return Err(RainError::invalid("d_min must be positive"));
    }
    let lambda = marshall_palmer_lambda(rate_mm_hr)?;
    Ok(MP_N0 / lambda * (-lambda * d_min_mm).exp())
}

/// Inverse-CDF samples of the exponential size density truncated to
/// `[d_min_mm, d_max_mm]`.
pub fn sample_diameters<R: Rng + ?Sized>(
    n: usize,
    lambda: f64,
    d_min_mm: f64,
    d_max_mm: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(d_min_mm < d_max_mm) {
        return Err(RainError::invalid(format!(
            "d_min ({d_min_mm}) must be below d_max ({d_max_mm})"
        )));
    }
    if !(lambda > 0.0) {
        return Err(RainError::invalid("size slope must be positive"));
    }
    let mass = 1.0 - (-lambda * (d_max_mm - d_min_mm)).exp();
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let d = d_min_mm - (-u * mass).ln_1p() / lambda;
            d.clamp(d_min_mm, d_max_mm)
        })
        .collect())
}

/// Terminal fall speed (m/s) of a drop of diameter `a_mm`, clamped at zero.
pub fn terminal_velocity(a_mm: f64) -> f64 {
    (9.65 - 10.3 * (-0.6 * a_mm).exp()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropClass {
    FogLike,
    Streak,
}

impl DropClass {
    fn as_str(self) -> &'static str {
        match self {
            DropClass::FogLike => "fog_like",
            DropClass::Streak => "streak",
        }
    }
}

/// One simulated raindrop, camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Drop {
    pub diameter_mm: f64,
    /// Position at shutter opening.
    pub x0: Vector3<f64>,
    /// Position at shutter closing.
    pub x1: Vector3<f64>,
    /// Midpoint, used as the constant position for lighting.
    pub x: Vector3<f64>,
    /// Image position at shutter opening; `None` when behind the camera.
    pub p0: Option<Vector2<f64>>,
    pub p1: Option<Vector2<f64>>,
    pub projected_width_px: f64,
    pub class: DropClass,
}

impl Drop {
    /// Move a drop that starts at `x0` over the exposure of `camera`.
    pub fn new(diameter_mm: f64, x0: Vector3<f64>, camera: &CameraModel) -> Self {
        let fall = Vector3::new(0.0, terminal_velocity(diameter_mm), 0.0);
        let rel = fall - camera.ego_velocity;
        let x1 = x0 + rel * camera.exposure_s;
        let x = (x0 + x1) * 0.5;
        let projected_width_px = if x.z > 0.0 {
            camera.fx * diameter_mm * 1e-3 / x.z
        } else {
            0.0
        };
        let class = if projected_width_px >= 1.0 {
            DropClass::Streak
        } else {
            DropClass::FogLike
        };
        Self {
            diameter_mm,
            x0,
            x1,
            x,
            p0: camera.project(&x0),
            p1: camera.project(&x1),
            projected_width_px,
            class,
        }
    }

    /// Both endpoints lie in front of the camera.
    pub fn is_imaged(&self) -> bool {
        self.p0.is_some() && self.p1.is_some()
    }

    /// Image-space streak length in pixels (0 when not imaged).
    pub fn streak_length_px(&self) -> f64 {
        match (self.p0, self.p1) {
            (Some(a), Some(b)) => (b - a).norm(),
            _ => 0.0,
        }
    }
}

/// Time a drop spends on a single pixel: `min(T, T / length)`.
pub fn pixel_dwell_time(drop: &Drop, exposure_s: f64) -> f64 {
    dwell_time_for_length(drop.streak_length_px(), exposure_s)
}

pub fn dwell_time_for_length(length_px: f64, exposure_s: f64) -> f64 {
    if length_px <= 1.0 {
        exposure_s
    } else {
        exposure_s / length_px
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropPopulation {
    pub drops: Vec<Drop>,
    pub rate_mm_hr: f64,
    pub volume_m3: f64,
    pub seed: u64,
}

impl DropPopulation {
    pub fn streak_count(&self) -> usize {
        self.drops
            .iter()
            .filter(|d| d.class == DropClass::Streak)
            .count()
    }

    /// Fraction of drops rendered as streaks (0 for an empty population).
    pub fn streak_fraction(&self) -> f64 {
        if self.drops.is_empty() {
            0.0
        } else {
            self.streak_count() as f64 / self.drops.len() as f64
        }
    }

    /// One drop per line: `a x0 y0 z0 x1 y1 z1 p0x p0y p1x p1y class`.
    pub fn dump_table(&self) -> String {
        let mut out = String::from("# diameter_mm x0 y0 z0 x1 y1 z1 p0x p0y p1x p1y class\n");
        let pt = |p: Option<Vector2<f64>>| match p {
            Some(p) => format!("{:.6} {:.6}", p.x, p.y),
            None => "nan nan".to_string(),
        };
        for d in &self.drops {
            let _ = writeln!(
                out,
                "{:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {} {} {}",
                d.diameter_mm,
                d.x0.x,
                d.x0.y,
                d.x0.z,
                d.x1.x,
                d.x1.y,
                d.x1.z,
                pt(d.p0),
                pt(d.p1),
                d.class.as_str()
            );
        }
        out
    }
}

/// Padded frustum between the near clip and the simulation depth.
#[derive(Debug, Clone, Copy)]
struct Frustum {
    near: f64,
    far: f64,
    pad: f64,
    // cross-section = (sx * z + 2 pad) * (sy * z + 2 pad)
    sx: f64,
    sy: f64,
}

impl Frustum {
    fn new(config: &RainfallConfig, camera: &CameraModel) -> Result<Self> {
        let f = Self {
            near: config.near_clip_m,
            far: config.sim_depth_m,
            pad: config.lateral_pad_m,
            sx: camera.width as f64 / camera.fx,
            sy: camera.height as f64 / camera.fy,
        };
        if !(f.far > f.near) {
            return Err(RainError::DegenerateFrustum(format!(
                "simulation depth {} m does not exceed the near clip {} m",
                f.far, f.near
            )));
        }
        if !(f.volume() > 0.0) {
            return Err(RainError::DegenerateFrustum("zero volume".into()));
        }
        Ok(f)
    }

    fn area(&self, z: f64) -> f64 {
        (self.sx * z + 2.0 * self.pad) * (self.sy * z + 2.0 * self.pad)
    }

    fn volume(&self) -> f64 {
        let p2 = 2.0 * self.pad;
        let antiderivative = |z: f64| {
            self.sx * self.sy * z.powi(3) / 3.0
                + (self.sx + self.sy) * p2 * z * z / 2.0
                + p2 * p2 * z
        };
        antiderivative(self.far) - antiderivative(self.near)
    }

    /// Uniform point in the padded frustum (rejection on depth, then uniform
    /// over the cross-section).
    fn sample<R: Rng + ?Sized>(&self, camera: &CameraModel, rng: &mut R) -> Vector3<f64> {
        let max_area = self.area(self.far);
        let z = loop {
            let z = self.near + (self.far - self.near) * rng.random::<f64>();
            if rng.random::<f64>() * max_area <= self.area(z) {
                break z;
            }
        };
        let ([x0, x1], [y0, y1]) = camera.extent_at(z);
        let x = x0 - self.pad + (x1 - x0 + 2.0 * self.pad) * rng.random::<f64>();
        let y = y0 - self.pad + (y1 - y0 + 2.0 * self.pad) * rng.random::<f64>();
        Vector3::new(x, y, z)
    }
}

/// Simulated volume in m^3 for this configuration.
pub fn simulation_volume(config: &RainfallConfig, camera: &CameraModel) -> Result<f64> {
    Ok(Frustum::new(config, camera)?.volume())
}

/// Sample the drop population visible to `camera` for one exposure.
pub fn simulate<R: Rng + ?Sized>(
    config: &RainfallConfig,
    camera: &CameraModel,
    rng: &mut R,
) -> Result<DropPopulation> {
    config.validate()?;
    camera.validate()?;
    let frustum = Frustum::new(config, camera)?;
    let volume_m3 = frustum.volume();
    let mut population = DropPopulation {
        drops: Vec::new(),
        rate_mm_hr: config.rate_mm_hr,
        volume_m3,
        seed: config.seed,
    };
    if config.rate_mm_hr == 0.0 {
        return Ok(population);
    }

    let mean = drop_concentration(config.rate_mm_hr, config.d_min_mm)? * volume_m3;
    let count = Poisson::new(mean)
        .map_err(|e| RainError::invalid(format!("drop count distribution: {e}")))?
        .sample(rng) as usize;
    let lambda = marshall_palmer_lambda(config.rate_mm_hr)?;
    let diameters = sample_diameters(count, lambda, config.d_min_mm, config.d_max_mm, rng)?;

    population.drops = diameters
        .into_iter()
        .map(|a| Drop::new(a, frustum.sample(camera, rng), camera))
        .collect();
    Ok(population)
}

/// [`simulate`] driven by `config.seed`.
pub fn simulate_seeded(config: &RainfallConfig, camera: &CameraModel) -> Result<DropPopulation> {
    simulate(config, camera, &mut seeded_rng(config.seed))
}
