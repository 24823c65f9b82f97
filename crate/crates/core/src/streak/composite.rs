use super::warp::PlacedRaster;
use crate::error::{RainError, Result};
use crate::scene::{CameraModel, DepthMap, ImageBuffer};

/// Blur-circle size, in pixels, of an object `depth_m` away:
/// `|(d - f_p) f^2 / (d (f_p - f) f_N)|` divided by the pixel pitch.
pub fn circle_of_confusion(depth_m: f64, camera: &CameraModel) -> f64 {
    let f = camera.focal_m;
    let fp = camera.focus_plane_m;
    let c = (depth_m - fp) * f * f / (depth_m * (fp - f) * camera.f_number);
    c.abs() / camera.pixel_pitch()
}

/// Pixel coverage of a disk of `radius` centred on the middle of a
/// `(2h+1)^2` grid, estimated with 16x16 subsamples per pixel. Not normalized.
fn disk_coverage(radius: f64) -> (usize, Vec<f64>) {
    const SUB: usize = 16;
    let half = radius.ceil() as usize;
    let side = 2 * half + 1;
    let r2 = radius * radius;
    let mut cov = vec![0.0; side * side];
    for gy in 0..side {
        for gx in 0..side {
            let mut inside = 0;
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let dx = gx as f64 - half as f64 - 0.5 + (sx as f64 + 0.5) / SUB as f64;
                    let dy = gy as f64 - half as f64 - 0.5 + (sy as f64 + 0.5) / SUB as f64;
                    if dx * dx + dy * dy <= r2 {
                        inside += 1;
                    }
                }
            }
            cov[gy * side + gx] = inside as f64 / (SUB * SUB) as f64;
        }
    }
    (half, cov)
}

/// Normalized disk kernel; returns its half size and `(2h+1)^2` weights.
pub fn disk_kernel(radius: f64) -> (usize, Vec<f32>) {
    let (half, cov) = disk_coverage(radius);
    let total: f64 = cov.iter().sum();
    (half, cov.iter().map(|c| (c / total) as f32).collect())
}

/// Convolve a placed raster with a disk of `radius_px`; radii under half a
/// pixel leave it untouched. The raster grows by the kernel half size.
pub fn defocus(raster: &PlacedRaster, radius_px: f64) -> PlacedRaster {
    if !(radius_px >= 0.5) {
        return raster.clone();
    }
    let (half, kernel) = disk_kernel(radius_px);
    let side = 2 * half + 1;
    let width = raster.width + 2 * half;
    let height = raster.height + 2 * half;
    let mut radiance = vec![0.0f32; width * height];
    let mut alpha = vec![0.0f32; width * height];
    for y in 0..raster.height {
        for x in 0..raster.width {
            let i = y * raster.width + x;
            let (r, a) = (raster.radiance[i], raster.alpha[i]);
            if r == 0.0 && a == 0.0 {
                continue;
            }
            for ky in 0..side {
                let row = (y + ky) * width + x;
                for kx in 0..side {
                    let k = kernel[ky * side + kx];
                    radiance[row + kx] += r * k;
                    alpha[row + kx] += a * k;
                }
            }
        }
    }
    for a in &mut alpha {
        *a = a.min(1.0);
    }
    PlacedRaster {
        x0: raster.x0 - half as i64,
        y0: raster.y0 - half as i64,
        width,
        height,
        radiance,
        alpha,
    }
}

/// Pixel dwell times and shutter time, seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureTimes {
    /// Dwell time of the simulated drop.
    pub tau1: f64,
    /// Dwell time of the streak database drop.
    pub tau0: f64,
    pub exposure: f64,
}

/// Composite one streak over `image` in place:
/// `I = (T - alpha tau1) / T * I + S' tau1 / tau0` with `S' = radiance * weight`.
///
/// With `occlusion`, pixels whose scene depth is closer than the drop are skipped.
pub fn blend_streak(
    image: &mut ImageBuffer,
    streak: &PlacedRaster,
    weight: [f64; 3],
    times: ExposureTimes,
    occlusion: Option<(&DepthMap, f64)>,
) -> Result<()> {
    let ExposureTimes {
        tau1,
        tau0,
        exposure,
    } = times;
    if !(tau1 > 0.0 && tau0 > 0.0 && exposure > 0.0) {
        return Err(RainError::invalid("dwell and exposure times must be positive"));
    }
    if tau1 > exposure * (1.0 + 1e-12) {
        return Err(RainError::invalid(format!(
            "dwell time {tau1} s exceeds the exposure {exposure} s"
        )));
    }
    let gain = tau1 / tau0;
    let (iw, ih) = (image.width() as i64, image.height() as i64);
    for sy in 0..streak.height {
        let y = streak.y0 + sy as i64;
        if y < 0 || y >= ih {
            continue;
        }
        for sx in 0..streak.width {
            let x = streak.x0 + sx as i64;
            if x < 0 || x >= iw {
                continue;
            }
            let i = sy * streak.width + sx;
            let (s, a) = (streak.radiance[i] as f64, streak.alpha[i] as f64);
            if s == 0.0 && a == 0.0 {
                continue;
            }
            let (xu, yu) = (x as usize, y as usize);
            if let Some((depth, drop_depth)) = occlusion {
                if (depth.at(xu, yu) as f64) < drop_depth {
                    continue;
                }
            }
            let background = (exposure - a.clamp(0.0, 1.0) * tau1) / exposure;
            let p = image.pixel(xu, yu);
            let out = [0, 1, 2]
                .map(|c| (background * p[c] as f64 + s * weight[c] * gain).clamp(0.0, 1.0) as f32);
            image.set_pixel(xu, yu, out);
        }
    }
    Ok(())
}

fn scaled(pre: &ImageBuffer, k: f64) -> ImageBuffer {
    let mut out = pre.clone();
    for v in out.data_mut() {
        *v = (k * *v as f64).clamp(0.0, 1.0) as f32;
    }
    out
}

/// Global gain so the output mean matches `original`. Starts from the ratio
/// of means; when clamping at 1 eats into the mean the gain is refined by
/// bisection on the clamped mean.
pub fn restore_luminosity(pre: &ImageBuffer, original: &ImageBuffer) -> Result<ImageBuffer> {
    if pre.width() != original.width() || pre.height() != original.height() {
        return Err(RainError::DimensionMismatch {
            expected_w: original.width(),
            expected_h: original.height(),
            found_w: pre.width(),
            found_h: pre.height(),
        });
    }
    let pre_mean = pre.mean();
    if !(pre_mean > 0.0) {
        return Err(RainError::ZeroMeanLuminosity);
    }
    let target = original.mean();
    let k = target / pre_mean;
    let out = scaled(pre, k);
    if (out.mean() - target).abs() <= 1e-6 {
        return Ok(out);
    }

    // mean(clamp(k * pre)) is non-decreasing in k
    let (mut lo, mut hi) = (k, 2.0 * k);
    let mut best = out;
    for _ in 0..60 {
        let m = scaled(pre, hi).mean();
        if m >= target {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let candidate = scaled(pre, mid);
        let m = candidate.mean();
        if (m - target).abs() < (best.mean() - target).abs() {
            best = candidate;
        }
        if (m - target).abs() <= 1e-7 {
            break;
        }
        if m < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}
