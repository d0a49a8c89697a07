//! Synthetic serial-link arm standing in for a joint-conditioned robot model.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points sampled along the links for loss point sets, on top of the keypoints.
pub const LOSS_LINK_POINTS: usize = 64;

/// Kinematic description of a revolute chain. Link `i` extends along the
/// local +z axis after joint `i` has rotated about `joint_axes[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_joints: usize,
    /// Meters.
    pub link_lengths: Vec<f64>,
    pub joint_axes: Vec<Vector3<f64>>,
    /// Per-joint `(lo, hi)` in radians.
    #[serde(default)]
    pub joint_limits: Option<Vec<(f64, f64)>>,
}

impl Default for ChainSpec {
    /// A 7-joint arm at roughly Franka scale, axes alternating z/y.
    fn default() -> Self {
        let link_lengths = vec![0.33, 0.32, 0.21, 0.21, 0.18, 0.11, 0.10];
        let joint_axes = (0..7)
            .map(|i| {
                if i % 2 == 0 {
                    Vector3::z()
                } else {
                    Vector3::y()
                }
            })
            .collect();
        Self {
            n_joints: 7,
            link_lengths,
            joint_axes,
            joint_limits: None,
        }
    }
}

impl ChainSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)
            .map_err(|e| Error::InvalidConfig(format!("chain spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_joints;
        if n == 0 {
            return Err(Error::InvalidConfig(
                "chain needs at least one joint".into(),
            ));
        }
        for len in [self.link_lengths.len(), self.joint_axes.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        if let Some(l) = self.link_lengths.iter().find(|l| !(**l > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "link length {l} must be positive"
            )));
        }
        if self
            .joint_axes
            .iter()
            .any(|a| (a.norm() - 1.0).abs() > 1e-9)
        {
            return Err(Error::InvalidConfig(
                "joint axes must be unit vectors".into(),
            ));
        }
        if let Some(lim) = &self.joint_limits {
            if lim.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: lim.len(),
                });
            }
            if lim.iter().any(|(lo, hi)| !(lo <= hi)) {
                return Err(Error::InvalidConfig("joint limit with lo > hi".into()));
            }
        }
        Ok(())
    }

    pub fn limits(&self) -> Vec<(f64, f64)> {
        self.joint_limits
            .clone()
            .unwrap_or_else(|| vec![(-PI, PI); self.n_joints])
    }

    pub fn total_length(&self) -> f64 {
        self.link_lengths.iter().sum()
    }
}

/// Joint angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub angles: Vec<f64>,
}

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        Self { angles }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }
}

/// Joint keypoints in the base frame: `n + 1` points starting at the origin.
pub fn forward_kinematics(spec: &ChainSpec, j: &JointConfig) -> Result<Vec<Vector3<f64>>> {
    if j.angles.len() != spec.n_joints {
        return Err(Error::DimensionMismatch {
            expected: spec.n_joints,
            got: j.angles.len(),
        });
    }
    if j.angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidConfig("joint angles must be finite".into()));
    }
    let mut rot = Matrix3::identity();
    let mut kp = Vec::with_capacity(spec.n_joints + 1);
    kp.push(Vector3::zeros());
    for ((axis, angle), len) in spec
        .joint_axes
        .iter()
        .zip(&j.angles)
        .zip(&spec.link_lengths)
    {
        rot *= Rotation3::from_axis_angle(&Unit::new_normalize(*axis), *angle).into_inner();
        let next = kp.last().unwrap() + rot * Vector3::new(0.0, 0.0, *len);
        kp.push(next);
    }
    Ok(kp)
}

/// Keypoints followed by `count` points spread evenly by arc length along
/// the chain, each at the middle of its equal-length stretch.
pub fn sample_points(spec: &ChainSpec, j: &JointConfig, count: usize) -> Result<Vec<Vector3<f64>>> {
    if count == 0 {
        return Err(Error::InvalidConfig(
            "link point count must be at least 1".into(),
        ));
    }
    let kp = forward_kinematics(spec, j)?;
    let total = spec.total_length();
    let mut out = kp.clone();
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 0..count {
        let s = (i as f64 + 0.5) / count as f64 * total;
        while seg + 1 < spec.link_lengths.len() && s > seg_start + spec.link_lengths[seg] {
            seg_start += spec.link_lengths[seg];
            seg += 1;
        }
        let a = (s - seg_start) / spec.link_lengths[seg];
        out.push(kp[seg] + (kp[seg + 1] - kp[seg]) * a);
    }
    Ok(out)
}

/// The robot at a fixed joint configuration, expressed about the centroid
/// of its sampled points. A pose's translation is therefore the centroid's
/// camera-frame position, and rotations do not swing it around.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub keypoints: Vec<Vector3<f64>>,
    pub points: Vec<Vector3<f64>>,
}

impl RobotModel {
    pub fn new(spec: &ChainSpec, j: &JointConfig, link_points: usize) -> Result<Self> {
        let kp = forward_kinematics(spec, j)?;
        let pts = sample_points(spec, j, link_points)?;
        let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
        Ok(Self {
            keypoints: kp.iter().map(|p| p - centroid).collect(),
            points: pts.iter().map(|p| p - centroid).collect(),
        })
    }
}
