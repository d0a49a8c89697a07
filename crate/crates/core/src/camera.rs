//! Pinhole camera model: projection, frustum membership and crop geometry.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::Pose;

/// Minimum crop side in pixels.
pub const MIN_CROP_SIZE: f64 = 32.0;
/// Default inflation of the projected bounding box.
pub const DEFAULT_CROP_EXPAND: f64 = 1.4;
/// Default rescale target of a crop (width, height).
pub const DEFAULT_CROP_TARGET: (f64, f64) = (320.0, 240.0);

/// Slack on frustum boundaries, in pixels for the image box and meters for
/// depth. Poses clamped exactly onto the boundary round-trip through
/// normalization with a few ulps of error.
const BOUNDARY_SLACK: f64 = 1e-9;

/// Pinhole intrinsics with a single focal length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Focal length (pixels).
    pub f: f64,
    /// Image width (pixels).
    pub width: f64,
    /// Image height (pixels).
    pub height: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// Intrinsics with the principal point at the image center.
    pub fn new(f: f64, width: f64, height: f64) -> Result<Self> {
        Self::with_principal_point(f, width, height, width / 2.0, height / 2.0)
    }

    pub fn with_principal_point(f: f64, width: f64, height: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self {
            f,
            width,
            height,
            cx,
            cy,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0 && self.f.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!("f = {}", self.f)));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidIntrinsics(format!(
                "image size {}x{}",
                self.width, self.height
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("principal point".into()));
        }
        Ok(())
    }
}

/// Valid depth interval along the optical axis (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { min: 0.3, max: 3.0 }
    }
}

impl DepthRange {
    pub fn contains(&self, z: f64) -> bool {
        z >= self.min - BOUNDARY_SLACK && z <= self.max + BOUNDARY_SLACK
    }
}

pub fn project_point(p: &Vector3<f64>, k: &CameraIntrinsics) -> Result<Vector2<f64>> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok(Vector2::new(k.f * p.x / p.z + k.cx, k.f * p.y / p.z + k.cy))
}

/// Whether the pose's origin projects inside the image shrunk by `margin`
/// (a fraction of each side) and lies within `depth`.
pub fn in_frustum(pose: &Pose, k: &CameraIntrinsics, margin: f64, depth: &DepthRange) -> bool {
    let t = &pose.translation;
    if !depth.contains(t.z) {
        return false;
    }
    let Ok(uv) = project_point(t, k) else {
        return false;
    };
    let (u_lo, u_hi) = (margin * k.width, (1.0 - margin) * k.width);
    let (v_lo, v_hi) = (margin * k.height, (1.0 - margin) * k.height);
    uv.x >= u_lo - BOUNDARY_SLACK
        && uv.x <= u_hi + BOUNDARY_SLACK
        && uv.y >= v_lo - BOUNDARY_SLACK
        && uv.y <= v_hi + BOUNDARY_SLACK
}

/// A crop window in image pixels plus the size it is rescaled to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRect {
    pub u0: f64,
    pub v0: f64,
    pub width: f64,
    pub height: f64,
    pub target_w: f64,
    pub target_h: f64,
}

impl CropRect {
    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.u0 + self.width / 2.0, self.v0 + self.height / 2.0)
    }

    pub fn contains(&self, uv: &Vector2<f64>) -> bool {
        let eps = 1e-9 * (1.0 + self.width.max(self.height));
        uv.x >= self.u0 - eps
            && uv.x <= self.u0 + self.width + eps
            && uv.y >= self.v0 - eps
            && uv.y <= self.v0 + self.height + eps
    }

    /// Pixel scale factor from crop to target.
    pub fn scale(&self) -> f64 {
        self.target_w / self.width
    }
}

/// Crop window around the projection of `points`.
///
/// The tight bounding box is inflated by `expand` about its center, each
/// side raised to at least [`MIN_CROP_SIZE`], then the shorter side grown
/// until the aspect ratio matches `target`.
pub fn crop_region(
    points: &[Vector3<f64>],
    k: &CameraIntrinsics,
    target: (f64, f64),
    expand: f64,
) -> Result<CropRect> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if !(target.0 > 0.0 && target.1 > 0.0 && expand > 0.0) {
        return Err(Error::InvalidRange(format!(
            "crop target {target:?}, expand {expand}"
        )));
    }
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for p in points {
        let uv = project_point(p, k)?;
        lo = lo.inf(&uv);
        hi = hi.sup(&uv);
    }
    let center = (lo + hi) / 2.0;
    let mut w = ((hi.x - lo.x) * expand).max(MIN_CROP_SIZE);
    let mut h = ((hi.y - lo.y) * expand).max(MIN_CROP_SIZE);
    let aspect = target.0 / target.1;
    if w / h < aspect {
        w = h * aspect;
    } else {
        h = w / aspect;
    }
    Ok(CropRect {
        u0: center.x - w / 2.0,
        v0: center.y - h / 2.0,
        width: w,
        height: h,
        target_w: target.0,
        target_h: target.1,
    })
}
