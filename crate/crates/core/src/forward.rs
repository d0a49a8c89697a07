//! Visibility-constrained forward diffusion `q(H_t | H_0)`.
//!
//! Noise is applied in monocular-normalized space, component-scaled by
//! [`NoiseScales`], and the translation part is then held inside the
//! normalized image of the camera frustum. Rotation components are never
//! constrained so orientations still spread over all of SO(3).

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, DepthRange};
use crate::error::{Error, Result};
use crate::mononorm::{
    denormalize, denormalize_any_depth, normalize, NormConfig, NormalizedPose, Vector9,
};
use crate::rng::SimRng;
use crate::schedule::Schedule;
use crate::se3::Pose;

pub const DEFAULT_GAMMA: f64 = 3.0;
pub const DEFAULT_MARGIN: f64 = 0.05;
pub const DEFAULT_DEGENERATE_RETRIES: usize = 16;
pub const DEFAULT_MAX_REJECTIONS: usize = 256;

/// Per-component standard deviations of the injected noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScales {
    pub rot: f64,
    pub xy: f64,
    pub z: f64,
}

impl NoiseScales {
    /// Translation scales sized so that `gamma` standard deviations span the
    /// visible half-range: `0.5/γ` in-plane and `(z_max − z_min)/(2γ)` in depth.
    pub fn from_gamma(gamma: f64, depth: &DepthRange) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self {
            rot: 1.0,
            xy: 0.5 / gamma,
            z: (depth.max - depth.min) / (2.0 * gamma),
        })
    }

    pub fn unit() -> Self {
        Self {
            rot: 1.0,
            xy: 1.0,
            z: 1.0,
        }
    }

    pub fn as_vector(&self) -> Vector9 {
        let r = self.rot;
        Vector9::from_column_slice(&[r, r, r, r, r, r, self.xy, self.xy, self.z])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rot > 0.0 && self.xy > 0.0 && self.z > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise scales must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box in normalized translation space whose denormalized
/// points project inside the image (shrunk by a margin) within the depth range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrustumBox {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
}

impl FrustumBox {
    pub fn new(k: &CameraIntrinsics, margin: f64, cfg: &NormConfig) -> Result<Self> {
        if !(0.0..0.5).contains(&margin) {
            return Err(Error::InvalidConfig(format!(
                "margin must be in [0, 0.5), got {margin}"
            )));
        }
        let x = (
            (margin * k.width - k.cx) / k.width,
            ((1.0 - margin) * k.width - k.cx) / k.width,
        );
        let y = (
            (margin * k.height - k.cy) / k.height,
            ((1.0 - margin) * k.height - k.cy) / k.height,
        );
        let z = (cfg.depth.min - cfg.c_z, cfg.depth.max - cfg.c_z);
        if !(x.0 < x.1 && y.0 < y.1 && z.0 < z.1) {
            return Err(Error::InvalidConfig("empty frustum box".into()));
        }
        Ok(Self { x, y, z })
    }

    pub fn contains(&self, t: &Vector3<f64>) -> bool {
        (self.x.0..=self.x.1).contains(&t.x)
            && (self.y.0..=self.y.1).contains(&t.y)
            && (self.z.0..=self.z.1).contains(&t.z)
    }

    pub fn clamp(&self, t: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            t.x.clamp(self.x.0, self.x.1),
            t.y.clamp(self.y.0, self.y.1),
            t.z.clamp(self.z.0, self.z.1),
        )
    }

    /// Uniform sample of a translation inside the box.
    pub fn sample(&self, rng: &mut SimRng) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(self.x.0..=self.x.1),
            rng.random_range(self.y.0..=self.y.1),
            rng.random_range(self.z.0..=self.z.1),
        )
    }
}

/// What to do with a noisy translation that leaves the frustum box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Containment {
    #[default]
    Clamp,
    /// Redraw the noise until the translation lands inside.
    Reject,
    /// Leave it alone (plain Euclidean diffusion).
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub scales: NoiseScales,
    pub margin: f64,
    pub containment: Containment,
    pub degenerate_retries: usize,
    pub max_rejections: usize,
}

impl ForwardConfig {
    pub fn new(gamma: f64, cfg: &NormConfig) -> Result<Self> {
        Ok(Self {
            scales: NoiseScales::from_gamma(gamma, &cfg.depth)?,
            margin: DEFAULT_MARGIN,
            containment: Containment::Clamp,
            degenerate_retries: DEFAULT_DEGENERATE_RETRIES,
            max_rejections: DEFAULT_MAX_REJECTIONS,
        })
    }
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self::new(DEFAULT_GAMMA, &NormConfig::default()).expect("default gamma is valid")
    }
}

/// `√ᾱ_t · n0 + √(1−ᾱ_t) · (eps ⊙ scales)`, with the translation clamped into
/// `bounds` when given. Pure; this is the closed form the sampler builds on.
pub fn diffuse_with_noise(
    n0: &NormalizedPose,
    t: usize,
    sched: &Schedule,
    scales: &NoiseScales,
    bounds: Option<&FrustumBox>,
    eps: &Vector9,
) -> NormalizedPose {
    let ab = sched.alpha_bar(t);
    let v = n0.0 * ab.sqrt() + eps.component_mul(&scales.as_vector()) * (1.0 - ab).sqrt();
    let mut n = NormalizedPose(v);
    if let Some(b) = bounds {
        n.set_translation(&b.clamp(&n.translation()));
    }
    n
}

pub fn standard_normal9(rng: &mut SimRng) -> Vector9 {
    Vector9::from_fn(|_, _| rng.sample(StandardNormal))
}

/// A forward-diffused pose together with the draw that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusedSample {
    pub noisy: NormalizedPose,
    pub pose: Pose,
    pub eps: Vector9,
    /// Whether clamping moved the translation.
    pub clamped: bool,
    /// Noise vectors drawn, including redraws.
    pub draws: usize,
}

/// Draws `H_t ~ q(H_t | H_0)`. Without containment the pose may end up
/// behind the camera.
pub fn diffuse_sample(
    pose0: &Pose,
    t: usize,
    sched: &Schedule,
    fwd: &ForwardConfig,
    k: &CameraIntrinsics,
    cfg: &NormConfig,
    rng: &mut SimRng,
) -> Result<DiffusedSample> {
    sched.check_timestep(t)?;
    let n0 = normalize(pose0, k, cfg)?;
    let bounds = FrustumBox::new(k, fwd.margin, cfg)?;
    let mut draws = 0;
    let mut degenerate = 0;
    let mut rejected = 0;
    loop {
        let eps = standard_normal9(rng);
        draws += 1;
        let raw = diffuse_with_noise(&n0, t, sched, &fwd.scales, None, &eps);
        let (noisy, clamped) = match fwd.containment {
            Containment::Off => (raw, false),
            Containment::Clamp => {
                let inside = bounds.contains(&raw.translation());
                let mut n = raw;
                n.set_translation(&bounds.clamp(&raw.translation()));
                (n, !inside)
            }
            Containment::Reject => {
                if !bounds.contains(&raw.translation()) {
                    rejected += 1;
                    if rejected >= fwd.max_rejections {
                        return Err(Error::RejectionExhausted(rejected));
                    }
                    continue;
                }
                (raw, false)
            }
        };
        let pose = match fwd.containment {
            Containment::Off => denormalize_any_depth(&noisy, k, cfg),
            _ => denormalize(&noisy, k, cfg),
        };
        match pose {
            Ok(pose) => {
                return Ok(DiffusedSample {
                    noisy,
                    pose,
                    eps,
                    clamped,
                    draws,
                })
            }
            Err(Error::DegenerateRotation6D { .. }) if degenerate < fwd.degenerate_retries => {
                degenerate += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

pub fn diffuse(
    pose0: &Pose,
    t: usize,
    sched: &Schedule,
    fwd: &ForwardConfig,
    k: &CameraIntrinsics,
    cfg: &NormConfig,
    rng: &mut SimRng,
) -> Result<Pose> {
    diffuse_sample(pose0, t, sched, fwd, k, cfg, rng).map(|s| s.pose)
}

/// Uniform draw from `1..=steps`.
pub fn sample_timestep(steps: usize, rng: &mut SimRng) -> usize {
    rng.random_range(1..=steps)
}
