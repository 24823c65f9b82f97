use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{RainError, Result};

/// Physical rain settings for one render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RainfallConfig {
    /// Rainfall rate, mm/hr.
    pub rate_mm_hr: f64,
    pub seed: u64,
    /// Smallest simulated drop diameter, mm. Smaller drops only feed the fog layer.
    pub d_min_mm: f64,
    pub d_max_mm: f64,
    /// Far bound of the simulated frustum, meters.
    pub sim_depth_m: f64,
    /// Lateral padding of the frustum, meters.
    pub lateral_pad_m: f64,
    /// Near bound of the simulated frustum, meters.
    pub near_clip_m: f64,
    /// Henyey-Greenstein asymmetry.
    pub hg_g: f64,
    /// Direction towards the sun in a level frame (x right, y up, z forward).
    pub sun_direction: [f64; 3],
    pub irradiance_scale: f64,
}

impl Default for RainfallConfig {
    fn default() -> Self {
        Self {
            rate_mm_hr: 0.0,
            seed: 0,
            d_min_mm: 1.0,
            d_max_mm: 6.0,
            sim_depth_m: 10.0,
            lateral_pad_m: 0.5,
            near_clip_m: 0.1,
            hg_g: 0.9,
            sun_direction: [0.0, 1.0, 0.0],
            irradiance_scale: 1.0,
        }
    }
}

impl RainfallConfig {
    pub fn with_rate(rate_mm_hr: f64, seed: u64) -> Self {
        Self {
            rate_mm_hr,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_mm_hr.is_finite() && self.rate_mm_hr >= 0.0) {
            return Err(RainError::invalid(format!(
                "rainfall rate must be >= 0, got {}",
                self.rate_mm_hr
            )));
        }
        if !(self.d_min_mm > 0.0 && self.d_min_mm < self.d_max_mm && self.d_max_mm.is_finite()) {
            return Err(RainError::invalid(format!(
                "need 0 < d_min < d_max, got [{}, {}]",
                self.d_min_mm, self.d_max_mm
            )));
        }
        if !(self.hg_g.abs() < 1.0) {
            return Err(RainError::invalid(format!("|g| must be < 1, got {}", self.hg_g)));
        }
        if !(self.near_clip_m > 0.0 && self.lateral_pad_m >= 0.0 && self.sim_depth_m.is_finite())
        {
            return Err(RainError::invalid("simulation volume bounds are invalid"));
        }
        if !(self.irradiance_scale.is_finite() && self.irradiance_scale >= 0.0) {
            return Err(RainError::invalid("irradiance scale must be >= 0"));
        }
        let sun = Vector3::from(self.sun_direction);
        if !(sun.norm() > 0.0 && sun.iter().all(|v| v.is_finite())) {
            return Err(RainError::invalid("sun direction must be a non-zero vector"));
        }
        Ok(())
    }

    /// Unit sun direction in the camera frame (y down).
    pub fn sun_in_camera(&self) -> Vector3<f64> {
        let [x, y, z] = self.sun_direction;
        Vector3::new(x, -y, z).normalize()
    }
}
