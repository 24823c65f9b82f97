//! Lighting for individual drops.
//!
//! An equirectangular environment map is approximated from the input image
//! alone. Each drop sees a wide cone of that map (about 165 degrees) behind
//! it; the cone is traced onto the scene sphere, its outline rasterized on
//! the map, and the mean radiance inside gives the drop's colour.
//!
//! Map convention: columns span azimuth `[-pi, pi)` with azimuth 0 looking
//! down the optical axis; rows span altitude from the zenith (row 0) to the
//! nadir. Directions are in the camera frame (x right, y down, z forward)
//! and the camera is assumed level.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Rotation3, Unit, Vector3};

use crate::error::{RainError, Result};
use crate::scene::{CameraModel, ImageBuffer, RainfallConfig};

pub const DEFAULT_MAP_WIDTH: usize = 256;
pub const DEFAULT_MAP_HEIGHT: usize = 128;
pub const DEFAULT_SPHERE_RADIUS_M: f64 = 10.0;
pub const DROP_FOV_DEG: f64 = 165.0;
pub const CONE_SAMPLES: usize = 20;

/// Share of radiance a drop refracts from its field of view; the rest is
/// reflected from the whole environment.
pub const REFRACTED_SHARE: f64 = 0.94;
pub const REFLECTED_SHARE: f64 = 0.06;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    width: usize,
    height: usize,
    sphere_radius_m: f64,
    data: Vec<[f64; 3]>,
    /// Row-wise prefix sums, `width + 1` entries per row.
    prefix: Vec<[f64; 3]>,
    mean: [f64; 3],
}

impl EnvironmentMap {
    pub fn from_fn(
        width: usize,
        height: usize,
        sphere_radius_m: f64,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(RainError::invalid("environment map needs at least 2x2 cells"));
        }
        if !(sphere_radius_m > 0.0) {
            return Err(RainError::invalid("scene sphere radius must be positive"));
        }
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                let v = f(col, row);
                if !v.iter().all(|c| c.is_finite() && *c >= 0.0) {
                    return Err(RainError::invalid(format!(
                        "environment radiance {v:?} at ({col}, {row}) is not finite and >= 0"
                    )));
                }
                data.push(v);
            }
        }
        let mut prefix = Vec::with_capacity((width + 1) * height);
        let mut total = [0.0f64; 3];
        for row in data.chunks_exact(width) {
            let mut acc = [0.0f64; 3];
            prefix.push(acc);
            for v in row {
                for c in 0..3 {
                    acc[c] += v[c];
                }
                prefix.push(acc);
            }
            for c in 0..3 {
                total[c] += acc[c];
            }
        }
        let n = (width * height) as f64;
        Ok(Self {
            width,
            height,
            sphere_radius_m,
            data,
            prefix,
            mean: total.map(|v| v / n),
        })
    }

    pub fn uniform(width: usize, height: usize, value: [f64; 3]) -> Result<Self> {
        Self::from_fn(width, height, DEFAULT_SPHERE_RADIUS_M, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn sphere_radius_m(&self) -> f64 {
        self.sphere_radius_m
    }

    pub fn at(&self, col: usize, row: usize) -> [f64; 3] {
        self.data[row * self.width + col]
    }

    /// Mean over all cells (Ē).
    pub fn mean(&self) -> [f64; 3] {
        self.mean
    }

    pub fn row_mean(&self, row: usize) -> [f64; 3] {
        self.span_sum(row, 0, self.width).map(|v| v / self.width as f64)
    }

    fn span_sum(&self, row: usize, start: usize, end: usize) -> [f64; 3] {
        let base = row * (self.width + 1);
        let (a, b) = (self.prefix[base + start], self.prefix[base + end]);
        [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
    }

    /// Unit camera-frame direction through the centre of a cell.
    pub fn cell_direction(&self, col: usize, row: usize) -> Vector3<f64> {
        let az = (col as f64 + 0.5) / self.width as f64 * TAU - PI;
        let alt = FRAC_PI_2 - (row as f64 + 0.5) / self.height as f64 * PI;
        Vector3::new(alt.cos() * az.sin(), -alt.sin(), alt.cos() * az.cos())
    }

    /// Continuous map coordinates `(u, v)` of a camera-frame direction.
    pub fn map_coords(&self, dir: &Vector3<f64>) -> (f64, f64) {
        let n = dir.norm();
        let az = dir.x.atan2(dir.z);
        let alt = (-dir.y / n).clamp(-1.0, 1.0).asin();
        (
            (az + PI) / TAU * self.width as f64,
            (FRAC_PI_2 - alt) / PI * self.height as f64,
        )
    }

    fn cell_of(&self, dir: &Vector3<f64>) -> (usize, usize) {
        let (u, v) = self.map_coords(dir);
        (
            (u.floor() as isize).rem_euclid(self.width as isize) as usize,
            (v.floor().max(0.0) as usize).min(self.height - 1),
        )
    }

    /// Clamped linear-RGB rendering of the map, for inspection.
    pub fn to_image(&self) -> Result<ImageBuffer> {
        ImageBuffer::from_fn(self.width, self.height, |x, y| self.at(x, y).map(|v| v as f32))
    }
}

/// Approximate the surrounding environment from the image itself.
///
/// Cells seen by the camera take the mean of the image pixels whose rays
/// land in them. Unseen cells in a row that the camera partly covers take
/// that row's mean; rows above the camera's view take the mean of the top
/// third of the image and rows below it the mean of the bottom third.
pub fn estimate_environment(
    image: &ImageBuffer,
    camera: &CameraModel,
    width: usize,
    height: usize,
    sphere_radius_m: f64,
) -> Result<EnvironmentMap> {
    let probe = EnvironmentMap::uniform(width, height, [0.0; 3])?;
    let (iw, ih) = (image.width(), image.height());
    let mut sums = vec![[0.0f64; 3]; width * height];
    let mut counts = vec![0u32; width * height];

    // Image rays in pixel units of the raster (the calibration may refer to
    // a different resolution).
    let sx = camera.width as f64 / iw as f64;
    let sy = camera.height as f64 / ih as f64;
    for y in 0..ih {
        for x in 0..iw {
            let dir = camera.ray((x as f64 + 0.5) * sx, (y as f64 + 0.5) * sy);
            let (col, row) = probe.cell_of(&dir);
            let i = row * width + col;
            let p = image.pixel(x, y);
            for c in 0..3 {
                sums[i][c] += p[c] as f64;
            }
            counts[i] += 1;
        }
    }

    let mut seen: Vec<Option<[f64; 3]>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s.map(|v| v / n as f64)))
        .collect();

    // Coarse rasters leave gaps inside the view; look those cells up directly.
    for row in 0..height {
        for col in 0..width {
            let i = row * width + col;
            if seen[i].is_some() {
                continue;
            }
            if let Some(p) = camera.project(&probe.cell_direction(col, row)) {
                let (px, py) = (p.x / sx, p.y / sy);
                if px >= 0.0 && py >= 0.0 && px < iw as f64 && py < ih as f64 {
                    let v = image.pixel(px as usize, py as usize);
                    seen[i] = Some(v.map(|c| c as f64));
                }
            }
        }
    }

    let row_means: Vec<Option<[f64; 3]>> = (0..height)
        .map(|row| {
            let cells: Vec<[f64; 3]> = seen[row * width..(row + 1) * width]
                .iter()
                .flatten()
                .copied()
                .collect();
            (!cells.is_empty()).then(|| {
                let mut acc = [0.0; 3];
                for v in &cells {
                    for c in 0..3 {
                        acc[c] += v[c];
                    }
                }
                acc.map(|v| v / cells.len() as f64)
            })
        })
        .collect();
    let first_seen = row_means.iter().position(Option::is_some);
    let third = (ih / 3).max(1);
    let upper = image.band_mean(0, third);
    let lower = image.band_mean(ih - third, ih);

    EnvironmentMap::from_fn(width, height, sphere_radius_m, |col, row| {
        if let Some(v) = seen[row * width + col] {
            return v;
        }
        match (row_means[row], first_seen) {
            (Some(m), _) => m,
            (None, Some(first)) if row < first => upper,
            _ => lower,
        }
    })
}

/// Sun irradiance proxy: scaled per-channel mean of the image.
pub fn estimate_sun_irradiance(image: &ImageBuffer, config: &RainfallConfig) -> [f64; 3] {
    image.channel_means().map(|m| m * config.irradiance_scale)
}

fn rotate(v: &Vector3<f64>, axis: &Vector3<f64>, angle: f64) -> Vector3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle) * v
}

/// Directions on the boundary of the cone a drop at `x` sees, opening
/// `fov_deg` around the viewing direction `x / |x|`.
pub fn drop_view_cone(x: &Vector3<f64>, fov_deg: f64, samples: usize) -> Result<Vec<Vector3<f64>>> {
    let norm = x.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(RainError::Geometry("drop position at the camera centre".into()));
    }
    if samples == 0 {
        return Err(RainError::invalid("cone needs at least one sample"));
    }
    let d = x / norm;
    let mut u = d.cross(&Vector3::z());
    if u.norm() < 1e-6 {
        u = d.cross(&Vector3::x());
    }
    let v = rotate(&d, &u, fov_deg.to_radians() / 2.0);
    Ok((0..samples)
        .map(|k| rotate(&v, &d, TAU * k as f64 / samples as f64))
        .collect())
}

/// Exit point of the ray `origin + t * dir` (t >= 0) on a sphere of
/// `radius` centred at the camera.
pub fn sphere_intersect(origin: &Vector3<f64>, dir: &Vector3<f64>, radius: f64) -> Result<Vector3<f64>> {
    if !(origin.norm() < radius) {
        return Err(RainError::Geometry(format!(
            "ray origin at {:.3} m is not inside the {radius} m sphere",
            origin.norm()
        )));
    }
    let a = dir.norm_squared();
    if !(a > 0.0) {
        return Err(RainError::Geometry("zero ray direction".into()));
    }
    let b = 2.0 * dir.dot(origin);
    let c = origin.norm_squared() - radius * radius;
    let t = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
    Ok(origin + dir * t)
}

/// Contiguous run of cells `[start, end)` in one map row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub row: usize,
    pub start: usize,
    pub end: usize,
}

/// Region of the environment map a drop sees, and its mean radiance (F̄).
#[derive(Debug, Clone, PartialEq)]
pub struct DropFov {
    pub spans: Vec<Span>,
    pub mean: [f64; 3],
}

impl DropFov {
    pub fn cell_count(&self) -> usize {
        self.spans.iter().map(|s| s.end - s.start).sum()
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        self.spans
            .iter()
            .any(|s| s.row == row && (s.start..s.end).contains(&col))
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.spans
            .iter()
            .flat_map(|s| (s.start..s.end).map(move |c| (c, s.row)))
    }

    /// Map with the region highlighted in red, for inspection.
    pub fn overlay(&self, env: &EnvironmentMap) -> Result<ImageBuffer> {
        let mut img = env.to_image()?;
        for (col, row) in self.cells() {
            let p = img.pixel(col, row);
            img.set_pixel(col, row, [0.5 + 0.5 * p[0], 0.5 * p[1], 0.5 * p[2]]);
        }
        Ok(img)
    }
}

/// Trace the drop's view cone onto the environment sphere and average the
/// radiance inside it.
pub fn drop_fov(x: &Vector3<f64>, env: &EnvironmentMap, fov_deg: f64, samples: usize) -> Result<DropFov> {
    let radius = env.sphere_radius_m();
    let cone = drop_view_cone(x, fov_deg, samples)?;
    let outline: Vec<(f64, f64)> = cone
        .iter()
        .map(|v| sphere_intersect(x, v, radius).map(|q| env.map_coords(&q)))
        .collect::<Result<_>>()?;

    let (w, h) = (env.width(), env.height());
    let wf = w as f64;
    let wrap = |du: f64| du - wf * (du / wf).round();

    // Unwrap azimuth along the outline so edges never jump across the seam.
    let mut poly: Vec<(f64, f64)> = Vec::with_capacity(outline.len() + 3);
    poly.push(outline[0]);
    for pair in outline.windows(2) {
        let prev = poly.last().unwrap().0;
        poly.push((prev + wrap(pair[1].0 - pair[0].0), pair[1].1));
    }
    let closing = poly.last().unwrap().0 + wrap(outline[0].0 - outline[outline.len() - 1].0);
    let winding = closing - poly[0].0;
    if winding.abs() > wf / 2.0 {
        // The outline circles a pole: close the polygon along that pole's edge.
        let d = x.normalize();
        let half = fov_deg.to_radians() / 2.0;
        let zenith = Vector3::new(0.0, -radius, 0.0);
        let zenith_inside = (zenith - x).normalize().dot(&d) >= half.cos();
        let pole_v = if zenith_inside { 0.0 } else { h as f64 };
        let v0 = poly[0].1;
        poly.push((closing, v0));
        poly.push((closing, pole_v));
        poly.push((poly[0].0, pole_v));
    }

    let mut mask = vec![false; w * h];
    let mut xs: Vec<f64> = Vec::with_capacity(poly.len());
    for row in 0..h {
        let yc = row as f64 + 0.5;
        xs.clear();
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            if (a.1 <= yc) != (b.1 <= yc) {
                xs.push(a.0 + (yc - a.1) * (b.0 - a.0) / (b.1 - a.1));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let start = (pair[0] - 0.5).ceil() as i64;
            let end = ((pair[1] - 0.5).ceil() as i64).min(start + w as i64);
            for i in start..end {
                mask[row * w + i.rem_euclid(w as i64) as usize] = true;
            }
        }
    }

    if !mask.iter().any(|&m| m) {
        let centre = sphere_intersect(x, &x.normalize(), radius)?;
        let (col, row) = env.cell_of(&centre);
        mask[row * w + col] = true;
    }

    let mut spans = Vec::new();
    let mut sum = [0.0f64; 3];
    for row in 0..h {
        let line = &mask[row * w..(row + 1) * w];
        let mut col = 0;
        while col < w {
            if !line[col] {
                col += 1;
                continue;
            }
            let start = col;
            while col < w && line[col] {
                col += 1;
            }
            let s = env.span_sum(row, start, col);
            for c in 0..3 {
                sum[c] += s[c];
            }
            spans.push(Span { row, start, end: col });
        }
    }
    let n: usize = spans.iter().map(|s| s.end - s.start).sum();
    Ok(DropFov {
        spans,
        mean: sum.map(|v| v / n as f64),
    })
}

/// `0.94 F̄ + 0.06 Ē`, per channel.
pub fn photometric_weight(fov_mean: [f64; 3], env_mean: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|c| REFRACTED_SHARE * fov_mean[c] + REFLECTED_SHARE * env_mean[c])
}

pub fn streak_photometric_weight(fov: &DropFov, env: &EnvironmentMap) -> [f64; 3] {
    photometric_weight(fov.mean, env.mean())
}
