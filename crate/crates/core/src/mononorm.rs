//! Monocular normalization: a bijection between camera-frame poses and a
//! 9-vector in which diffusion is plain Euclidean.
//!
//! The vector stacks the first two rotation columns, then the translation
//! as `(f·tx/(w·tz), f·ty/(h·tz), tz − c_z)`. The in-plane components are
//! image-relative offsets of the projected origin, so their scale does not
//! depend on the camera. With a centered principal point the visible band
//! is `[-0.5, 0.5]` on both axes.

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, DepthRange};
use crate::error::{Error, Result};
use crate::se3::{gram_schmidt_6d, Pose, Rotation6D};

pub type Vector9 = SVector<f64, 9>;

/// Index of the first translation component in a [`Vector9`].
pub const TRANSLATION_OFFSET: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    /// Depth normalization offset (meters).
    pub c_z: f64,
    pub depth: DepthRange,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            c_z: 1.5,
            depth: DepthRange::default(),
        }
    }
}

impl NormConfig {
    pub fn validate(&self) -> Result<()> {
        let DepthRange { min, max } = self.depth;
        if !(0.0 < min && min < self.c_z && self.c_z < max) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < z_min < c_z < z_max, got z_min={min}, c_z={}, z_max={max}",
                self.c_z
            )));
        }
        Ok(())
    }
}

/// A pose in monocular-normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPose(pub Vector9);

impl NormalizedPose {
    pub fn from_parts(rot6: &Rotation6D, translation: &Vector3<f64>) -> Self {
        let r = rot6.to_array();
        Self(Vector9::from_column_slice(&[
            r[0],
            r[1],
            r[2],
            r[3],
            r[4],
            r[5],
            translation.x,
            translation.y,
            translation.z,
        ]))
    }

    pub fn rot6(&self) -> Rotation6D {
        Rotation6D::new(
            self.0.fixed_rows::<3>(0).into_owned(),
            self.0.fixed_rows::<3>(3).into_owned(),
        )
    }

    /// `(tx_n, ty_n, tz_n)`.
    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(TRANSLATION_OFFSET).into_owned()
    }

    pub fn set_translation(&mut self, t: &Vector3<f64>) {
        self.0.fixed_rows_mut::<3>(TRANSLATION_OFFSET).copy_from(t);
    }

    pub fn tx_n(&self) -> f64 {
        self.0[6]
    }
    pub fn ty_n(&self) -> f64 {
        self.0[7]
    }
    pub fn tz_n(&self) -> f64 {
        self.0[8]
    }

    pub fn as_vector(&self) -> &Vector9 {
        &self.0
    }
}

pub fn normalize(pose: &Pose, k: &CameraIntrinsics, cfg: &NormConfig) -> Result<NormalizedPose> {
    let t = &pose.translation;
    if !(t.z > 0.0) {
        return Err(Error::NonPositiveDepth { z: t.z });
    }
    let tn = Vector3::new(
        k.f * t.x / (k.width * t.z),
        k.f * t.y / (k.height * t.z),
        t.z - cfg.c_z,
    );
    Ok(NormalizedPose::from_parts(&pose.rotation6d(), &tn))
}

/// Inverse of [`normalize`]. Depth is recovered first since the in-plane
/// components are scaled by it.
pub fn denormalize(n: &NormalizedPose, k: &CameraIntrinsics, cfg: &NormConfig) -> Result<Pose> {
    let tz = n.tz_n() + cfg.c_z;
    if !(tz > 0.0) {
        return Err(Error::NonPositiveDepth { z: tz });
    }
    denormalize_any_depth(n, k, cfg)
}

/// [`denormalize`] without the depth check: a non-positive depth yields the
/// rigid transform placing the origin at or behind the camera.
pub fn denormalize_any_depth(
    n: &NormalizedPose,
    k: &CameraIntrinsics,
    cfg: &NormConfig,
) -> Result<Pose> {
    let tz = n.tz_n() + cfg.c_z;
    let tx = k.width * tz / k.f * n.tx_n();
    let ty = k.height * tz / k.f * n.ty_n();
    let rotation = gram_schmidt_6d(&n.rot6())?;
    Ok(Pose::new(rotation, Vector3::new(tx, ty, tz)))
}
