//! End-to-end rendering of one image: fog layer, streaks, luminosity.

use std::time::Instant;

use nalgebra::Vector2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RainError, Result};
use crate::fog::{render_fog, FogParams};
use crate::illumination::{
    drop_fov, estimate_environment, estimate_sun_irradiance, streak_photometric_weight,
    EnvironmentMap, CONE_SAMPLES, DEFAULT_MAP_HEIGHT, DEFAULT_MAP_WIDTH, DEFAULT_SPHERE_RADIUS_M,
    DROP_FOV_DEG,
};
use crate::physics::{pixel_dwell_time, simulate, DropClass, DropPopulation, Drop};
use crate::scene::{CameraModel, DepthMap, ImageBuffer, RainfallConfig};
use crate::streak::{
    blend_streak, circle_of_confusion, defocus, procedural_streak, restore_luminosity,
    warp_streak, ExposureTimes, PlacedRaster, StreakLibrary, TAU0_S,
};

/// Rendering knobs that are not part of the physical rain description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub env_width: usize,
    pub env_height: usize,
    pub sphere_radius_m: f64,
    pub drop_fov_deg: f64,
    pub fov_samples: usize,
    /// Stop after the fog layer.
    pub fog_only: bool,
    /// Hide streak pixels that lie behind scene geometry.
    pub depth_occlusion: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            env_width: DEFAULT_MAP_WIDTH,
            env_height: DEFAULT_MAP_HEIGHT,
            sphere_radius_m: DEFAULT_SPHERE_RADIUS_M,
            drop_fov_deg: DROP_FOV_DEG,
            fov_samples: CONE_SAMPLES,
            fog_only: false,
            depth_occlusion: false,
        }
    }
}

/// Where streak appearance comes from.
#[derive(Debug, Clone, Copy)]
pub enum StreakSource<'a> {
    Procedural,
    Library(&'a StreakLibrary),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RenderReport {
    pub rate_mm_hr: f64,
    pub seed: u64,
    pub simulation_s: f64,
    pub rendering_s: f64,
    pub drop_count: usize,
    pub streak_count: usize,
    /// Streaks that touched the image and were blended.
    pub rendered_streaks: usize,
    pub fog_like_fraction: f64,
    /// `|mean(output) - mean(input)|`.
    pub mean_luminosity_delta: f64,
}

/// Everything produced while rendering, for callers that want intermediates.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: ImageBuffer,
    pub report: RenderReport,
    pub population: DropPopulation,
    pub environment: Option<EnvironmentMap>,
}

struct PreparedStreak {
    index: usize,
    depth: f64,
    raster: PlacedRaster,
    weight: [f64; 3],
    times: ExposureTimes,
}

/// Camera intrinsics rescaled to a raster of a different resolution.
fn camera_for_raster(camera: &CameraModel, width: usize, height: usize) -> CameraModel {
    if camera.width == width && camera.height == height {
        return camera.clone();
    }
    let sx = width as f64 / camera.width as f64;
    let sy = height as f64 / camera.height as f64;
    CameraModel {
        fx: camera.fx * sx,
        fy: camera.fy * sy,
        cx: camera.cx * sx,
        cy: camera.cy * sy,
        width,
        height,
        ..camera.clone()
    }
}

/// Render rain over `image` and return the output and its report.
pub fn render_rain(
    image: &ImageBuffer,
    depth: &DepthMap,
    camera: &CameraModel,
    config: &RainfallConfig,
    options: &RenderOptions,
    streaks: StreakSource<'_>,
) -> Result<(ImageBuffer, RenderReport)> {
    let out = render_rain_detailed(image, depth, camera, config, options, streaks)?;
    Ok((out.image, out.report))
}

pub fn render_rain_detailed(
    image: &ImageBuffer,
    depth: &DepthMap,
    camera: &CameraModel,
    config: &RainfallConfig,
    options: &RenderOptions,
    streaks: StreakSource<'_>,
) -> Result<RenderOutput> {
    config.validate()?;
    camera.validate()?;
    if image.width() != depth.width() || image.height() != depth.height() {
        return Err(RainError::DimensionMismatch {
            expected_w: image.width(),
            expected_h: image.height(),
            found_w: depth.width(),
            found_h: depth.height(),
        });
    }
    let camera = camera_for_raster(camera, image.width(), image.height());

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let population = simulate(config, &camera, &mut rng)?;
    let simulation_s = started.elapsed().as_secs_f64();

    let mut report = RenderReport {
        rate_mm_hr: config.rate_mm_hr,
        seed: config.seed,
        simulation_s,
        drop_count: population.drops.len(),
        streak_count: population.streak_count(),
        fog_like_fraction: if population.drops.is_empty() {
            0.0
        } else {
            1.0 - population.streak_fraction()
        },
        ..RenderReport::default()
    };
    if config.rate_mm_hr == 0.0 {
        report.rendering_s = 0.0;
        return Ok(RenderOutput {
            image: image.clone(),
            report,
            population,
            environment: None,
        });
    }

    let started = Instant::now();
    let sun = estimate_sun_irradiance(image, config);
    let attenuated = render_fog(image, depth, &FogParams::new(config, sun), &camera)?;
    if options.fog_only {
        report.rendering_s = started.elapsed().as_secs_f64();
        report.mean_luminosity_delta = (attenuated.mean() - image.mean()).abs();
        return Ok(RenderOutput {
            image: attenuated,
            report,
            population,
            environment: None,
        });
    }

    let env = estimate_environment(
        image,
        &camera,
        options.env_width,
        options.env_height,
        options.sphere_radius_m,
    )?;
    let mut prepared: Vec<PreparedStreak> = population
        .drops
        .par_iter()
        .enumerate()
        .filter(|(_, d)| d.class == DropClass::Streak && d.is_imaged())
        .map(|(i, d)| prepare_streak(i, d, &camera, &env, config.seed, options, streaks))
        .filter_map(Result::transpose)
        .collect::<Result<_>>()?;

    // far to near; index breaks ties so the order never depends on scheduling
    prepared.sort_by(|a, b| b.depth.total_cmp(&a.depth).then(a.index.cmp(&b.index)));
    let mut rainy = attenuated;
    for s in &prepared {
        let occlusion = options.depth_occlusion.then_some((depth, s.depth));
        blend_streak(&mut rainy, &s.raster, s.weight, s.times, occlusion)?;
    }
    report.rendered_streaks = prepared.len();

    let restored = restore_luminosity(&rainy, image)?;
    report.rendering_s = started.elapsed().as_secs_f64();
    report.mean_luminosity_delta = (restored.mean() - image.mean()).abs();
    Ok(RenderOutput {
        image: restored,
        report,
        population,
        environment: Some(env),
    })
}

/// Sprite selection, warp, lighting and defocus for one streak drop.
/// Returns `None` for streaks that miss the image.
fn prepare_streak(
    index: usize,
    drop: &Drop,
    camera: &CameraModel,
    env: &EnvironmentMap,
    seed: u64,
    options: &RenderOptions,
    streaks: StreakSource<'_>,
) -> Result<Option<PreparedStreak>> {
    let (Some(p0), Some(p1)) = (drop.p0, drop.p1) else {
        return Ok(None);
    };
    let width = drop.projected_width_px;
    let coc = circle_of_confusion(drop.x.z, camera);
    let margin = width + coc + 2.0;
    let (lo, hi) = (p0.inf(&p1), p0.sup(&p1));
    if hi.x < -margin
        || hi.y < -margin
        || lo.x > camera.width as f64 + margin
        || lo.y > camera.height as f64 + margin
    {
        return Ok(None);
    }

    // Streaks shorter than the drop is wide are drawn as a round drop.
    let (q0, q1) = {
        let axis = p1 - p0;
        let len = axis.norm();
        if len >= width {
            (p0, p1)
        } else {
            let dir = if len > 1e-9 { axis / len } else { Vector2::new(0.0, 1.0) };
            let mid = (p0 + p1) * 0.5;
            (mid - dir * (width / 2.0), mid + dir * (width / 2.0))
        }
    };
    let length = (q1 - q0).norm();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let owned;
    let (sprite, tau0) = match streaks {
        StreakSource::Procedural => {
            owned = procedural_streak(drop.diameter_mm, length, width, rng.next_u64())?;
            (&owned, TAU0_S)
        }
        StreakSource::Library(lib) => (lib.select(drop.diameter_mm, &mut rng), lib.tau0_s),
    };
    let raster = warp_streak(sprite, q0, q1, width)?;
    let raster = defocus(&raster, coc);

    let fov = drop_fov(&drop.x, env, options.drop_fov_deg, options.fov_samples)?;
    let weight = streak_photometric_weight(&fov, env);
    let times = ExposureTimes {
        tau1: pixel_dwell_time(drop, camera.exposure_s),
        tau0,
        exposure: camera.exposure_s,
    };
    Ok(Some(PreparedStreak {
        index,
        depth: drop.x.z,
        raster,
        weight,
        times,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn camera(w: usize, h: usize) -> CameraModel {
        CameraModel {
            fx: 400.0,
            fy: 400.0,
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

    fn scene(w: usize, h: usize) -> (ImageBuffer, DepthMap) {
        let img = ImageBuffer::from_fn(w, h, |x, y| {
            let t = y as f32 / h as f32;
            [0.6 - 0.4 * t, 0.5 - 0.3 * t, 0.3 + 0.1 * (x % 7) as f32 / 7.0]
        })
        .unwrap();
        let depth = DepthMap::from_raw(w, h, (0..w * h).map(|i| 5.0 + (i % w) as f32 * 0.2).collect())
            .unwrap();
        (img, depth)
    }

    #[test]
    fn zero_rate_is_bit_identical() {
        let (img, depth) = scene(64, 32);
        let (out, report) = render_rain(
            &img,
            &depth,
            &camera(64, 32),
            &RainfallConfig::with_rate(0.0, 3),
            &RenderOptions::default(),
            StreakSource::Procedural,
        )
        .unwrap();
        assert_eq!(out, img);
        assert_eq!(report.drop_count, 0);
    }

    #[test]
    fn deterministic_and_restores_mean() {
        let (img, depth) = scene(160, 90);
        let cam = camera(160, 90);
        let cfg = RainfallConfig::with_rate(100.0, 11);
        let opts = RenderOptions::default();
        let (a, ra) = render_rain(&img, &depth, &cam, &cfg, &opts, StreakSource::Procedural).unwrap();
        let (b, _) = render_rain(&img, &depth, &cam, &cfg, &opts, StreakSource::Procedural).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, img);
        assert!(ra.rendered_streaks > 0);
        assert!(ra.mean_luminosity_delta <= 1e-3, "{}", ra.mean_luminosity_delta);
        assert!(ra.rendered_streaks <= ra.streak_count && ra.streak_count <= ra.drop_count);
    }

    #[test]
    fn fog_only_skips_streaks() {
        let (img, depth) = scene(48, 32);
        let opts = RenderOptions {
            fog_only: true,
            ..RenderOptions::default()
        };
        let cfg = RainfallConfig::with_rate(50.0, 1);
        let out = render_rain_detailed(&img, &depth, &camera(48, 32), &cfg, &opts, StreakSource::Procedural)
            .unwrap();
        let fog = render_fog(
            &img,
            &depth,
            &FogParams::new(&cfg, estimate_sun_irradiance(&img, &cfg)),
            &camera(48, 32),
        )
        .unwrap();
        assert_eq!(out.image, fog);
        assert!(out.environment.is_none());
    }

    #[test]
    fn depth_mismatch_rejected() {
        let (img, _) = scene(32, 16);
        let depth = DepthMap::uniform(16, 16, 10.0).unwrap();
        let err = render_rain(
            &img,
            &depth,
            &camera(32, 16),
            &RainfallConfig::with_rate(5.0, 0),
            &RenderOptions::default(),
            StreakSource::Procedural,
        );
        assert!(matches!(err, Err(RainError::DimensionMismatch { .. })));
    }

    #[test]
    fn calibration_rescaled_to_raster() {
        let cam = camera_for_raster(&camera(200, 100), 100, 50);
        assert_eq!((cam.width, cam.height), (100, 50));
        assert_eq!((cam.fx, cam.cx, cam.cy), (200.0, 50.0, 25.0));
    }
}
