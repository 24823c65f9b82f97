//! Fog-like rain: extinction plus airlight from drops too small to image.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{RainError, Result};
use crate::scene::{CameraModel, DepthMap, ImageBuffer, RainfallConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct FogParams {
    pub rate_mm_hr: f64,
    pub hg_g: f64,
    /// Ē_sun, per channel.
    pub sun_irradiance: [f64; 3],
    /// Unit sun direction, camera frame.
    pub sun_direction: nalgebra::Vector3<f64>,
    /// Factor turning depth-map meters into the extinction's distance unit.
    pub depth_unit_km: f64,
}

impl FogParams {
    pub fn new(config: &RainfallConfig, sun_irradiance: [f64; 3]) -> Self {
        Self {
            rate_mm_hr: config.rate_mm_hr,
            hg_g: config.hg_g,
            sun_irradiance,
            sun_direction: config.sun_in_camera(),
            depth_unit_km: 1e-3,
        }
    }
}

/// Transmittance through `depth_m` meters of rain: `exp(-0.312 R^0.67 d_km)`.
pub fn extinction(rate_mm_hr: f64, depth_m: f64) -> f64 {
    extinction_scaled(rate_mm_hr, depth_m * 1e-3)
}

fn extinction_scaled(rate_mm_hr: f64, distance: f64) -> f64 {
    (-0.312 * rate_mm_hr.powf(0.67) * distance).exp()
}

/// Henyey-Greenstein phase function at scattering angle `theta`.
pub fn hg_phase(theta: f64, g: f64) -> f64 {
    hg_phase_cos(theta.cos(), g)
}

#[inline]
fn hg_phase_cos(cos_theta: f64, g: f64) -> f64 {
    let g2 = g * g;
    (1.0 - g2) / (4.0 * PI * (1.0 + g2 - 2.0 * g * cos_theta).powf(1.5))
}

/// Attenuated image `I L_ext + beta_HG(theta) E_sun (1 - L_ext)`, clamped to [0, 1].
pub fn render_fog(
    image: &ImageBuffer,
    depth: &DepthMap,
    params: &FogParams,
    camera: &CameraModel,
) -> Result<ImageBuffer> {
    if image.width() != depth.width() || image.height() != depth.height() {
        return Err(RainError::DimensionMismatch {
            expected_w: image.width(),
            expected_h: image.height(),
            found_w: depth.width(),
            found_h: depth.height(),
        });
    }
    if !(params.hg_g.abs() < 1.0) {
        return Err(RainError::invalid("|g| must be < 1"));
    }
    let mut out = image.clone();
    if params.rate_mm_hr == 0.0 {
        return Ok(out);
    }
    let w = image.width();
    let sx = camera.width as f64 / w as f64;
    let sy = camera.height as f64 / image.height() as f64;
    let sun = params.sun_direction;
    out.data_mut()
        .par_chunks_mut(w * 3)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, px) in row.chunks_exact_mut(3).enumerate() {
                let ray = camera.ray((x as f64 + 0.5) * sx, (y as f64 + 0.5) * sy);
                let phase = hg_phase_cos(ray.dot(&sun), params.hg_g);
                let d = depth.at(x, y) as f64 * params.depth_unit_km;
                let l_ext = extinction_scaled(params.rate_mm_hr, d);
                for (v, e_sun) in px.iter_mut().zip(params.sun_irradiance) {
                    let airlight = phase * e_sun * (1.0 - l_ext);
                    *v = (*v as f64 * l_ext + airlight).clamp(0.0, 1.0) as f32;
                }
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn camera(w: usize, h: usize) -> CameraModel {
        CameraModel {
            fx: 50.0,
            fy: 50.0,
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            width: w,
            height: h,
            focal_m: 0.006,
            f_number: 2.0,
            focus_plane_m: 6.0,
            exposure_s: 0.002,
            ego_velocity: Vector3::zeros(),
        }
    }

    #[test]
    fn extinction_values() {
        assert_eq!(extinction(0.0, 123.0), 1.0);
        assert_eq!(extinction(50.0, 0.0), 1.0);
        assert!((extinction(50.0, 1000.0) - 0.013_703_949_957_343_037).abs() < 1e-15);
    }

    #[test]
    fn phase_values() {
        for theta in [0.0, 1.0, 3.0] {
            assert!((hg_phase(theta, 0.0) - 0.079_577_471_545_947_67).abs() < 1e-15);
        }
        assert!((hg_phase(0.0, 0.9) - 15.119_719_593_730_057).abs() < 1e-9);
    }

    #[test]
    fn zero_rate_is_identity() {
        let img = ImageBuffer::from_fn(8, 4, |x, y| [x as f32 / 8.0, y as f32 / 4.0, 0.3]).unwrap();
        let depth = DepthMap::uniform(8, 4, 50.0).unwrap();
        let params = FogParams::new(&RainfallConfig::default(), [0.7; 3]);
        assert_eq!(render_fog(&img, &depth, &params, &camera(8, 4)).unwrap(), img);
    }

    #[test]
    fn scalar_pipeline_value() {
        let img = ImageBuffer::filled(4, 4, [0.8; 3]).unwrap();
        let depth = DepthMap::uniform(4, 4, 1000.0).unwrap();
        let mut cfg = RainfallConfig::with_rate(50.0, 0);
        cfg.hg_g = 0.0;
        let params = FogParams::new(&cfg, [0.8; 3]);
        let out = render_fog(&img, &depth, &params, &camera(4, 4)).unwrap();
        for v in out.data() {
            assert!((*v as f64 - 0.073_752_716_652_394_52).abs() < 1e-6);
        }
    }

    #[test]
    fn infinite_depth_leaves_airlight_only() {
        let img = ImageBuffer::filled(2, 2, [0.6; 3]).unwrap();
        let depth = DepthMap::uniform(2, 2, 1e9).unwrap();
        let mut cfg = RainfallConfig::with_rate(25.0, 0);
        cfg.hg_g = 0.0;
        let out = render_fog(&img, &depth, &FogParams::new(&cfg, [0.5; 3]), &camera(2, 2)).unwrap();
        for v in out.data() {
            assert!((*v as f64 - 0.5 / (4.0 * PI)).abs() < 1e-6);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let img = ImageBuffer::filled(4, 4, [0.5; 3]).unwrap();
        let depth = DepthMap::uniform(4, 3, 5.0).unwrap();
        let params = FogParams::new(&RainfallConfig::with_rate(5.0, 0), [0.5; 3]);
        assert!(matches!(
            render_fog(&img, &depth, &params, &camera(4, 4)),
            Err(RainError::DimensionMismatch { .. })
        ));
    }
}
