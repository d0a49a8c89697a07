//! Rigid transforms and the 6D rotation representation.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on the norms Gram-Schmidt divides by.
pub const GS_EPS: f64 = 1e-8;

/// Tolerance used by [`Pose::is_valid`].
pub const SO3_TOL: f64 = 1e-9;

/// A rigid transform `x ↦ R·x + t` (rotation unitless, translation in meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt * self.translation))
    }

    /// First two columns of the orientation.
    pub fn rotation6d(&self) -> Rotation6D {
        Rotation6D::from_matrix(&self.rotation)
    }

    /// `RᵀR = I` and `det R = 1` within [`SO3_TOL`], finite translation.
    pub fn is_valid(&self) -> bool {
        is_rotation(&self.rotation, SO3_TOL) && self.translation.iter().all(|v| v.is_finite())
    }

    /// Homogeneous 3×4 `[R | t]` flattened row-major.
    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }
}

/// Max-abs deviation of `RᵀR` from identity.
pub fn orthogonality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    orthogonality_error(r) <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Two columns of a rotation matrix, unconstrained until orthogonalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation6D {
    pub r1: Vector3<f64>,
    pub r2: Vector3<f64>,
}

impl Rotation6D {
    pub fn new(r1: Vector3<f64>, r2: Vector3<f64>) -> Self {
        Self { r1, r2 }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::x(), Vector3::y())
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self::new(m.column(0).into_owned(), m.column(1).into_owned())
    }

    /// Column-stacked `(r1, r2)`.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.r1.x, self.r1.y, self.r1.z, self.r2.x, self.r2.y, self.r2.z,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 6 {
            return Err(Error::DimensionMismatch {
                expected: 6,
                got: v.len(),
            });
        }
        Ok(Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        ))
    }

    pub fn to_matrix(&self) -> Result<Matrix3<f64>> {
        gram_schmidt_6d(self)
    }
}

/// Orthogonalizes a 6D rotation into SO(3).
///
/// `u1 = r1/‖r1‖`, `u2` is `r2` with its `u1` component removed, normalized,
/// and `u3 = u1 × u2`. Fails when `‖r1‖` or the orthogonal residual of `r2`
/// falls below [`GS_EPS`]; callers that sample noise decide whether to redraw.
pub fn gram_schmidt_6d(r: &Rotation6D) -> Result<Matrix3<f64>> {
    let n1 = r.r1.norm();
    if !(n1 >= GS_EPS) {
        return Err(Error::DegenerateRotation6D { eps: GS_EPS });
    }
    let u1 = r.r1 / n1;
    let residual = r.r2 - u1 * r.r2.dot(&u1);
    let n2 = residual.norm();
    if !(n2 >= GS_EPS) {
        return Err(Error::DegenerateRotation6D { eps: GS_EPS });
    }
    let u2 = residual / n2;
    let u3 = u1.cross(&u2);
    Ok(Matrix3::from_columns(&[u1, u2, u3]))
}
