//! Pose denoiser contract and the decomposed update it predicts.
//!
//! A denoiser looks at the current pose `H_t` and returns three
//! corrections: an image-plane shift `v_xy` in pixels, a relative rotation
//! in 6D form, and a multiplicative depth ratio `v_z`. [`apply_update`]
//! turns them into the predicted clean pose `Ĥ_0`. The analytic oracles in
//! this module stand in for a trained network.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::{project_point, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::robot::{JointConfig, RobotModel};
use crate::schedule::Schedule;
use crate::se3::{gram_schmidt_6d, Pose, Rotation6D};

pub const DEFAULT_EMBEDDING_SIZE: usize = 4;
const EMBEDDING_BASE: f64 = 10_000.0;
const DEGENERATE_REDRAWS: usize = 16;

/// The prediction triplet of a pose denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserOutput {
    /// Image-plane displacement of the projected origin (pixels).
    pub v_xy: Vector2<f64>,
    /// Relative rotation, applied on the left of the current orientation.
    pub dr6: Rotation6D,
    /// Depth ratio `t_z(0) / t_z(t)`.
    pub v_z: f64,
}

impl DenoiserOutput {
    pub fn identity() -> Self {
        Self {
            v_xy: Vector2::zeros(),
            dr6: Rotation6D::identity(),
            v_z: 1.0,
        }
    }
}

/// What a denoiser is conditioned on. The ground truth is only read by
/// oracle denoisers.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub gt_pose: Pose,
    /// Projected joint keypoints (pixels), possibly noisy.
    pub keypoints_2d: Vec<Vector2<f64>>,
    pub intrinsics: CameraIntrinsics,
    pub joints: JointConfig,
}

impl Observation {
    /// Projects the model keypoints under `gt_pose`, adding isotropic pixel
    /// noise of std `noise_px`. Keypoints behind the camera are skipped.
    pub fn new(
        gt_pose: Pose,
        intrinsics: CameraIntrinsics,
        model: &RobotModel,
        joints: JointConfig,
        noise_px: f64,
        rng: &mut SimRng,
    ) -> Self {
        let keypoints_2d = model
            .keypoints
            .iter()
            .filter_map(|p| project_point(&gt_pose.transform_point(p), &intrinsics).ok())
            .map(|uv| {
                if noise_px > 0.0 {
                    let n: Vector2<f64> = Vector2::from_fn(|_, _| rng.sample(StandardNormal));
                    uv + n * noise_px
                } else {
                    uv
                }
            })
            .collect();
        Self {
            gt_pose,
            keypoints_2d,
            intrinsics,
            joints,
        }
    }
}

/// Sinusoidal encoding of a diffusion timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepEmbedding {
    pub values: Vec<f64>,
}

/// `values[2i] = sin(t / 10000^(2i/c))`, `values[2i+1] = cos(…)`.
pub fn embed_timestep(t: usize, c_emb: usize) -> Result<TimestepEmbedding> {
    if !c_emb.is_multiple_of(2) {
        return Err(Error::OddEmbeddingSize(c_emb));
    }
    let t = t as f64;
    let mut values = Vec::with_capacity(c_emb);
    for i in 0..c_emb / 2 {
        let freq = EMBEDDING_BASE.powf(-((2 * i) as f64) / c_emb as f64);
        values.push((t * freq).sin());
        values.push((t * freq).cos());
    }
    Ok(TimestepEmbedding { values })
}

/// Applies a prediction to `pose_t`: depth first, then the image-plane
/// shift at the new depth, then the left rotation.
pub fn apply_update(pose_t: &Pose, out: &DenoiserOutput, k: &CameraIntrinsics) -> Result<Pose> {
    let t = &pose_t.translation;
    if !(t.z > 0.0) {
        return Err(Error::NonPositiveDepth { z: t.z });
    }
    if !(out.v_z > 0.0) {
        return Err(Error::NonPositiveDepth { z: out.v_z });
    }
    let z = out.v_z * t.z;
    let x = (out.v_xy.x / k.f + t.x / t.z) * z;
    let y = (out.v_xy.y / k.f + t.y / t.z) * z;
    let delta = gram_schmidt_6d(&out.dr6)?;
    Ok(Pose::new(delta * pose_t.rotation, Vector3::new(x, y, z)))
}

/// The exact prediction that maps `pose_t` onto `pose0`.
pub fn compute_gt_targets(
    pose_t: &Pose,
    pose0: &Pose,
    k: &CameraIntrinsics,
) -> Result<DenoiserOutput> {
    let (tt, t0) = (&pose_t.translation, &pose0.translation);
    for z in [tt.z, t0.z] {
        if !(z > 0.0) {
            return Err(Error::NonPositiveDepth { z });
        }
    }
    let v_xy = Vector2::new(t0.x / t0.z - tt.x / tt.z, t0.y / t0.z - tt.y / tt.z) * k.f;
    let delta = pose0.rotation * pose_t.rotation.transpose();
    Ok(DenoiserOutput {
        v_xy,
        dr6: Rotation6D::from_matrix(&delta),
        v_z: t0.z / tt.z,
    })
}

/// A pose denoiser `D(H_t | observation, t)`.
pub trait Denoiser {
    fn predict(
        &self,
        pose_t: &Pose,
        t: usize,
        obs: &Observation,
        rng: &mut SimRng,
    ) -> Result<DenoiserOutput>;
}

/// Analytic stand-ins for a trained denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OracleKind {
    /// Exact targets.
    Perfect,
    /// Exact targets plus Gaussian noise of std `sigma0·√(1−ᾱ_t)` on every
    /// component. The depth ratio is perturbed in log space so it stays positive.
    Noisy { sigma0: f64 },
    /// Exact targets with a constant pixel offset added to both `v_xy` components.
    Biased { offset_px: f64 },
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleKind::Perfect => write!(f, "perfect"),
            OracleKind::Noisy { sigma0 } => write!(f, "noisy:{sigma0}"),
            OracleKind::Biased { offset_px } => write!(f, "biased:{offset_px}"),
        }
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidConfig(format!(
                "unknown denoiser {s:?}; expected perfect, noisy:<sigma0> or biased:<px>"
            ))
        };
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let value = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(bad)?.trim().parse::<f64>().map_err(|_| bad())
        };
        match name.trim() {
            "perfect" if arg.is_none() => Ok(OracleKind::Perfect),
            "noisy" => {
                let sigma0 = value(arg)?;
                if !(sigma0 >= 0.0 && sigma0.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "noisy sigma0 must be >= 0, got {sigma0}"
                    )));
                }
                Ok(OracleKind::Noisy { sigma0 })
            }
            "biased" => {
                let offset_px = value(arg)?;
                if !offset_px.is_finite() {
                    return Err(bad());
                }
                Ok(OracleKind::Biased { offset_px })
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for OracleKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OracleKind> for String {
    fn from(k: OracleKind) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleDenoiser<'a> {
    pub kind: OracleKind,
    pub schedule: &'a Schedule,
}

impl<'a> OracleDenoiser<'a> {
    pub fn new(kind: OracleKind, schedule: &'a Schedule) -> Self {
        Self { kind, schedule }
    }

    /// Prediction noise std at conditioning timestep `t`.
    pub fn noise_std(&self, t: usize) -> f64 {
        match self.kind {
            OracleKind::Noisy { sigma0 } => sigma0 * (1.0 - self.schedule.alpha_bar(t)).sqrt(),
            _ => 0.0,
        }
    }
}

impl Denoiser for OracleDenoiser<'_> {
    fn predict(
        &self,
        pose_t: &Pose,
        t: usize,
        obs: &Observation,
        rng: &mut SimRng,
    ) -> Result<DenoiserOutput> {
        if t > self.schedule.steps() {
            return Err(Error::InvalidTimestep {
                t,
                max: self.schedule.steps(),
            });
        }
        let exact = compute_gt_targets(pose_t, &obs.gt_pose, &obs.intrinsics)?;
        match self.kind {
            OracleKind::Perfect => Ok(exact),
            OracleKind::Biased { offset_px } => Ok(DenoiserOutput {
                v_xy: exact.v_xy.add_scalar(offset_px),
                ..exact
            }),
            OracleKind::Noisy { .. } => {
                let s = self.noise_std(t);
                let base = exact.dr6.to_array();
                for _ in 0..DEGENERATE_REDRAWS {
                    let n: [f64; 9] = std::array::from_fn(|_| rng.sample(StandardNormal));
                    let dr: [f64; 6] = std::array::from_fn(|i| base[i] + s * n[2 + i]);
                    let dr6 = Rotation6D::from_slice(&dr)?;
                    if gram_schmidt_6d(&dr6).is_err() {
                        continue;
                    }
                    return Ok(DenoiserOutput {
                        v_xy: exact.v_xy + Vector2::new(n[0], n[1]) * s,
                        dr6,
                        v_z: exact.v_z * (s * n[8]).exp(),
                    });
                }
                Err(Error::DegenerateRotation6D {
                    eps: crate::se3::GS_EPS,
                })
            }
        }
    }
}

/// One denoising step: predict and apply.
pub fn denoise(
    pose_t: &Pose,
    t: usize,
    obs: &Observation,
    denoiser: &dyn Denoiser,
    rng: &mut SimRng,
) -> Result<Pose> {
    let out = denoiser.predict(pose_t, t, obs, rng)?;
    apply_update(pose_t, &out, &obs.intrinsics)
}

/// Mean Euclidean distance between `a·x` and `b·x` over the point set.
pub fn point_distance(a: &Pose, b: &Pose, points: &[Vector3<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let sum: f64 = points
        .iter()
        .map(|x| (a.transform_point(x) - b.transform_point(x)).norm())
        .sum();
    Ok(sum / points.len() as f64)
}

/// Per-prediction loss terms. Each term swaps one predicted component into
/// otherwise exact targets, so it only responds to that component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub xy: f64,
    pub rot: f64,
    pub z: f64,
    pub total: f64,
}

pub fn decomposed_loss(
    pose0: &Pose,
    pose_t: &Pose,
    out: &DenoiserOutput,
    points: &[Vector3<f64>],
    k: &CameraIntrinsics,
) -> Result<LossTerms> {
    let gt = compute_gt_targets(pose_t, pose0, k)?;
    let term = |o: DenoiserOutput| -> Result<f64> {
        point_distance(pose0, &apply_update(pose_t, &o, k)?, points)
    };
    let xy = term(DenoiserOutput {
        v_xy: out.v_xy,
        ..gt
    })?;
    let rot = term(DenoiserOutput { dr6: out.dr6, ..gt })?;
    let z = term(DenoiserOutput { v_z: out.v_z, ..gt })?;
    Ok(LossTerms {
        xy,
        rot,
        z,
        total: xy + rot + z,
    })
}
