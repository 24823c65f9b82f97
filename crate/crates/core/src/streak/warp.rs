use nalgebra::{Matrix3, SMatrix, SVector, Vector2, Vector3};

use super::sprite::StreakSprite;
use crate::error::{RainError, Result};

/// Corners in order: top-left, top-right, bottom-right, bottom-left of the
/// sprite raster.
pub type Quad = [Vector2<f64>; 4];

/// Projective map between image planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    /// Exact four-point homography (normalized DLT with `h33 = 1`).
    pub fn from_correspondences(src: &Quad, dst: &Quad) -> Result<Self> {
        for (name, q) in [("source", src), ("target", dst)] {
            if is_degenerate(q) {
                return Err(RainError::Geometry(format!("{name} quad is degenerate")));
            }
        }
        let ts = normalizer(src);
        let td = normalizer(dst);
        let s: Vec<Vector2<f64>> = src.iter().map(|p| apply_affine(&ts, p)).collect();
        let d: Vec<Vector2<f64>> = dst.iter().map(|p| apply_affine(&td, p)).collect();

        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let (x, y) = (s[i].x, s[i].y);
            let (u, v) = (d[i].x, d[i].y);
            let r = 2 * i;
            a.row_mut(r)
                .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
            a.row_mut(r + 1)
                .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
            b[r] = u;
            b[r + 1] = v;
        }
        let h = a
            .lu()
            .solve(&b)
            .ok_or_else(|| RainError::Geometry("homography system is singular".into()))?;
        let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
        let td_inv = td
            .try_inverse()
            .ok_or_else(|| RainError::Geometry("target normalization is singular".into()))?;
        let m = td_inv * hn * ts;
        if !m.iter().all(|v| v.is_finite()) {
            return Err(RainError::Geometry("homography is not finite".into()));
        }
        Ok(Self(m / m[(2, 2)]))
    }

    #[inline]
    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let q = self.0 * Vector3::new(p.x, p.y, 1.0);
        Vector2::new(q.x / q.z, q.y / q.z)
    }

    pub fn inverse(&self) -> Option<Self> {
        self.0.try_inverse().map(Self)
    }
}

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn is_degenerate(q: &Quad) -> bool {
    let scale = q
        .iter()
        .flat_map(|p| q.iter().map(move |r| (p - r).norm()))
        .fold(0.0, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return true;
    }
    // any three corners collinear
    (0..4).any(|i| {
        let [a, b, c] = [q[i], q[(i + 1) % 4], q[(i + 2) % 4]];
        cross(&a, &b, &c).abs() <= 1e-9 * scale * scale
    })
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(q: &Quad) -> Matrix3<f64> {
    let c = q.iter().sum::<Vector2<f64>>() / 4.0;
    let mean = q.iter().map(|p| (p - c).norm()).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean;
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn apply_affine(m: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(
        m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)],
        m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)],
    )
}

/// Raster placed in image space with its top-left pixel at `(x0, y0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedRaster {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
    pub radiance: Vec<f32>,
    pub alpha: Vec<f32>,
}

impl PlacedRaster {
    pub fn alpha_mass(&self) -> f64 {
        self.alpha.iter().map(|&v| v as f64).sum()
    }
}

/// Corners of the sprite raster itself.
pub fn sprite_quad(sprite: &StreakSprite) -> Quad {
    let (w, h) = (sprite.width as f64, sprite.height as f64);
    [
        Vector2::new(0.0, 0.0),
        Vector2::new(w, 0.0),
        Vector2::new(w, h),
        Vector2::new(0.0, h),
    ]
}

/// Image-space quad for a streak running from `p0` to `p1`, `width_px` wide
/// (scaled by the sprite's footprint so the drop itself is `width_px` wide).
pub fn streak_quad(sprite: &StreakSprite, p0: Vector2<f64>, p1: Vector2<f64>, width_px: f64) -> Quad {
    let axis = p1 - p0;
    let len = axis.norm();
    let normal = if len > 0.0 {
        Vector2::new(-axis.y, axis.x) / len
    } else {
        Vector2::zeros()
    };
    let half = normal * (width_px * sprite.footprint_scale / 2.0);
    [p0 + half, p0 - half, p1 - half, p1 + half]
}

/// Resample `sprite` so its raster corners land on `quad`.
pub fn warp_to_quad(sprite: &StreakSprite, quad: &Quad) -> Result<PlacedRaster> {
    let h = Homography::from_correspondences(&sprite_quad(sprite), quad)?;
    let inv = h
        .inverse()
        .ok_or_else(|| RainError::Geometry("homography is not invertible".into()))?;

    let (mut min, mut max) = (quad[0], quad[0]);
    for p in quad {
        min = min.inf(p);
        max = max.sup(p);
    }
    let x0 = min.x.floor() as i64;
    let y0 = min.y.floor() as i64;
    let width = (max.x.ceil() as i64 - x0).max(1) as usize;
    let height = (max.y.ceil() as i64 - y0).max(1) as usize;

    // Supersample when the sprite is minified.
    let across = (quad[1] - quad[0]).norm().max(1e-9);
    let along = (quad[3] - quad[0]).norm().max(1e-9);
    let ratio = (sprite.width as f64 / across).max(sprite.height as f64 / along);
    let n = ratio.ceil().clamp(1.0, 8.0) as usize;
    let weight = 1.0 / (n * n) as f32;

    let mut radiance = vec![0.0f32; width * height];
    let mut alpha = vec![0.0f32; width * height];
    for iy in 0..height {
        for ix in 0..width {
            let (mut r, mut a) = (0.0f32, 0.0f32);
            for sy in 0..n {
                for sx in 0..n {
                    let q = Vector2::new(
                        (x0 + ix as i64) as f64 + (sx as f64 + 0.5) / n as f64,
                        (y0 + iy as i64) as f64 + (sy as f64 + 0.5) / n as f64,
                    );
                    let s = inv.apply(&q);
                    if let Some((sr, sa)) = sample_bilinear(sprite, s) {
                        r += sr;
                        a += sa;
                    }
                }
            }
            radiance[iy * width + ix] = r * weight;
            alpha[iy * width + ix] = (a * weight).min(1.0);
        }
    }
    Ok(PlacedRaster {
        x0,
        y0,
        width,
        height,
        radiance,
        alpha,
    })
}

/// Bilinear lookup with pixel centres at `i + 0.5`, clamped to the edge
/// inside the raster and empty outside it.
fn sample_bilinear(sprite: &StreakSprite, s: Vector2<f64>) -> Option<(f32, f32)> {
    let (w, h) = (sprite.width as f64, sprite.height as f64);
    if !(s.x >= 0.0 && s.y >= 0.0 && s.x <= w && s.y <= h) {
        return None;
    }
    let fx = (s.x - 0.5).clamp(0.0, w - 1.0);
    let fy = (s.y - 0.5).clamp(0.0, h - 1.0);
    let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
    let (tx, ty) = ((fx - ix as f64) as f32, (fy - iy as f64) as f32);
    let ix1 = (ix + 1).min(sprite.width - 1);
    let iy1 = (iy + 1).min(sprite.height - 1);
    let lerp = |get: &dyn Fn(usize, usize) -> f32| {
        let top = get(ix, iy) * (1.0 - tx) + get(ix1, iy) * tx;
        let bottom = get(ix, iy1) * (1.0 - tx) + get(ix1, iy1) * tx;
        top * (1.0 - ty) + bottom * ty
    };
    Some((
        lerp(&|x, y| sprite.radiance_at(x, y)),
        lerp(&|x, y| sprite.alpha_at(x, y)),
    ))
}

/// Warp a sprite onto the simulated streak from `p0` to `p1`.
pub fn warp_streak(
    sprite: &StreakSprite,
    p0: Vector2<f64>,
    p1: Vector2<f64>,
    width_px: f64,
) -> Result<PlacedRaster> {
    warp_to_quad(sprite, &streak_quad(sprite, p0, p1, width_px))
}

#[cfg(test)]
mod tests {
    use super::super::sprite::procedural_with_sway;
    use super::*;

    #[test]
    fn identity_warp_reproduces_sprite() {
        let s = procedural_with_sway(2.0, 12.0, 3.0, 0.8, 2.0, 0.3, 1).unwrap();
        let out = warp_to_quad(&s, &sprite_quad(&s)).unwrap();
        assert_eq!((out.x0, out.y0, out.width, out.height), (0, 0, s.width, s.height));
        for (a, b) in out.alpha.iter().zip(&s.alpha) {
            assert!((a - b).abs() < 1e-6);
        }
        for (a, b) in out.radiance.iter().zip(&s.radiance) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn corners_map_exactly() {
        let src = [
            Vector2::new(0.0, 0.0),
            Vector2::new(7.0, 0.0),
            Vector2::new(7.0, 40.0),
            Vector2::new(0.0, 40.0),
        ];
        let dst = [
            Vector2::new(100.3, 50.1),
            Vector2::new(104.9, 51.7),
            Vector2::new(96.0, 80.2),
            Vector2::new(93.4, 77.0),
        ];
        let h = Homography::from_correspondences(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            assert!((h.apply(s) - d).norm() < 1e-9);
        }
    }

    #[test]
    fn rotated_target_turns_axis_horizontal() {
        let s = procedural_with_sway(2.0, 30.0, 2.0, 0.0, 1.0, 0.0, 0).unwrap();
        let out = warp_streak(&s, Vector2::new(10.0, 20.0), Vector2::new(40.0, 20.0), 2.0).unwrap();
        assert!(out.width >= out.height * 4, "{}x{}", out.width, out.height);
        // mass concentrates on the row through y = 20
        let row_mass = |y: i64| -> f32 {
            let iy = (y - out.y0) as usize;
            out.alpha[iy * out.width..(iy + 1) * out.width].iter().sum()
        };
        assert!(row_mass(19) > row_mass(out.y0));
        let h = Homography::from_correspondences(
            &sprite_quad(&s),
            &streak_quad(&s, Vector2::new(10.0, 20.0), Vector2::new(40.0, 20.0), 2.0),
        )
        .unwrap();
        // the sprite axis (middle column) maps onto y = 20
        let top = h.apply(&Vector2::new(s.width as f64 / 2.0, 0.0));
        let bottom = h.apply(&Vector2::new(s.width as f64 / 2.0, s.height as f64));
        assert!((top - Vector2::new(10.0, 20.0)).norm() < 1e-9);
        assert!((bottom - Vector2::new(40.0, 20.0)).norm() < 1e-9);
    }

    #[test]
    fn collinear_target_is_rejected() {
        let s = procedural_with_sway(2.0, 10.0, 2.0, 0.0, 1.0, 0.0, 0).unwrap();
        let p = Vector2::new(5.0, 5.0);
        assert!(matches!(warp_streak(&s, p, p, 2.0), Err(RainError::Geometry(_))));
        let line = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(2.0, 2.0),
            Vector2::new(3.0, 3.0),
        ];
        assert!(warp_to_quad(&s, &line).is_err());
    }

    #[test]
    fn minified_sprite_keeps_coverage() {
        // a tall database-like sprite squeezed into a short streak
        let big = procedural_with_sway(2.0, 400.0, 8.0, 0.0, 1.0, 0.0, 0).unwrap();
        let out = warp_streak(&big, Vector2::new(0.0, 0.0), Vector2::new(0.0, 20.0), 2.0).unwrap();
        let full = warp_streak(
            &procedural_with_sway(2.0, 20.0, 2.0, 0.0, 1.0, 0.0, 0).unwrap(),
            Vector2::new(0.0, 0.0),
            Vector2::new(0.0, 20.0),
            2.0,
        )
        .unwrap();
        let ratio = out.alpha_mass() / full.alpha_mass();
        assert!((0.8..1.25).contains(&ratio), "{ratio}");
    }
}
