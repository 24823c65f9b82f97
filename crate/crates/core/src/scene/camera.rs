use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{RainError, Result};

pub const DEFAULT_FOCUS_PLANE_M: f64 = 6.0;

/// Pinhole camera. Camera frame: x right, y down, z forward (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Lens focal length, meters.
    pub focal_m: f64,
    pub f_number: f64,
    /// Distance of the in-focus plane, meters.
    pub focus_plane_m: f64,
    /// Shutter time, seconds.
    pub exposure_s: f64,
    /// Camera velocity in the camera frame, m/s.
    pub ego_velocity: Vector3<f64>,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fx", self.fx),
            ("fy", self.fy),
            ("focal_m", self.focal_m),
            ("f_number", self.f_number),
            ("exposure_s", self.exposure_s),
            ("focus_plane_m", self.focus_plane_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(RainError::Calibration(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(RainError::Calibration("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RainError::Calibration("image size must be non-zero".into()));
        }
        if self.focus_plane_m <= self.focal_m {
            return Err(RainError::Calibration(format!(
                "focus plane {} m must lie beyond the focal length {} m",
                self.focus_plane_m, self.focal_m
            )));
        }
        if !self.ego_velocity.iter().all(|v| v.is_finite()) {
            return Err(RainError::Calibration("ego velocity must be finite".into()));
        }
        Ok(())
    }

    /// Physical size of one pixel on the sensor, meters.
    pub fn pixel_pitch(&self) -> f64 {
        self.focal_m / self.fx
    }

    /// Pinhole projection; `None` behind the camera.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p.z <= 0.0 {
            return None;
        }
        Some(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Unit ray through image coordinates `(u, v)`.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }

    /// Lateral extent `[x_min, x_max] x [y_min, y_max]` of the image at depth `z`.
    pub(crate) fn extent_at(&self, z: f64) -> ([f64; 2], [f64; 2]) {
        (
            [-self.cx * z / self.fx, (self.width as f64 - self.cx) * z / self.fx],
            [-self.cy * z / self.fy, (self.height as f64 - self.cy) * z / self.fy],
        )
    }
}

/// Per-frame calibration override, keyed by image stem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego_speed_mps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_s: Option<f64>,
}

/// Calibration document as stored on disk / sent over the wire.
///
/// Numeric fields accept either JSON numbers or numeric strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDoc {
    #[serde(deserialize_with = "num")]
    pub fx: f64,
    #[serde(deserialize_with = "num")]
    pub fy: f64,
    #[serde(deserialize_with = "num")]
    pub cx: f64,
    #[serde(deserialize_with = "num")]
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(deserialize_with = "num")]
    pub focal_m: f64,
    #[serde(deserialize_with = "num")]
    pub f_number: f64,
    #[serde(deserialize_with = "num")]
    pub exposure_s: f64,
    #[serde(default, deserialize_with = "opt_num", skip_serializing_if = "Option::is_none")]
    pub focus_plane_m: Option<f64>,
    /// Forward speed (along +z), m/s.
    #[serde(default, deserialize_with = "opt_num", skip_serializing_if = "Option::is_none")]
    pub ego_speed_mps: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub frames: BTreeMap<String, FrameOverride>,
}

impl CalibrationDoc {
    pub fn camera(&self) -> Result<CameraModel> {
        let cam = CameraModel {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            focal_m: self.focal_m,
            f_number: self.f_number,
            focus_plane_m: self.focus_plane_m.unwrap_or(DEFAULT_FOCUS_PLANE_M),
            exposure_s: self.exposure_s,
            ego_velocity: Vector3::new(0.0, 0.0, self.ego_speed_mps.unwrap_or(0.0)),
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera for a named frame, applying any override recorded for it.
    pub fn camera_for_frame(&self, frame: &str) -> Result<CameraModel> {
        let mut cam = self.camera()?;
        if let Some(o) = self.frames.get(frame) {
            if let Some(s) = o.ego_speed_mps {
                cam.ego_velocity = Vector3::new(0.0, 0.0, s);
            }
            if let Some(t) = o.exposure_s {
                cam.exposure_s = t;
            }
            cam.validate()?;
        }
        Ok(cam)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrString {
    Num(f64),
    Str(String),
}

impl NumOrString {
    fn value<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            NumOrString::Num(v) => Ok(v),
            NumOrString::Str(s) => s
                .trim()
                .parse()
                .map_err(|_| E::custom(format!("expected a number, got {s:?}"))),
        }
    }
}

fn num<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    NumOrString::deserialize(d)?.value()
}

fn opt_num<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    Option::<NumOrString>::deserialize(d)?
        .map(NumOrString::value)
        .transpose()
}

pub fn parse_calibration(text: &str) -> Result<CalibrationDoc> {
    let doc: CalibrationDoc =
        serde_json::from_str(text).map_err(|e| RainError::Calibration(e.to_string()))?;
    doc.camera()?;
    Ok(doc)
}

/// Read and validate a calibration document.
pub fn load_calibration(path: &Path) -> Result<CalibrationDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| RainError::io(path, e))?;
    parse_calibration(&text)
}
