//! Reverse process: DDIM stepping in normalized space with a refinement
//! tail, the direct-regression baseline, and single-step tracking.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{crop_region, CropRect, DEFAULT_CROP_EXPAND, DEFAULT_CROP_TARGET};
use crate::denoise::{denoise, Denoiser, Observation};
use crate::error::{Error, Result};
use crate::forward::{standard_normal9, ForwardConfig, FrustumBox};
use crate::metrics::add_metric;
use crate::mononorm::{denormalize, normalize, NormConfig, NormalizedPose, Vector9};
use crate::rng::SimRng;
use crate::schedule::{Schedule, SigmaRule};
use crate::se3::{Pose, Rotation6D};

/// Conditioning timestep of refinement and direct-regression steps.
pub const REFINE_TIMESTEP: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Canonical orientation, image-centered at depth `c_z`.
    #[default]
    Canonical,
    /// A draw from the clamped noise prior.
    PriorSample,
    /// The caller-supplied previous estimate.
    PreviousEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReverseConfig {
    pub ddim_steps: usize,
    pub refine_steps: usize,
    pub eta: f64,
    pub init_mode: InitMode,
    pub sigma_rule: SigmaRule,
    /// First DDIM timestep; `None` starts at `T`.
    pub start_t: Option<usize>,
    pub canonical_rotation: Rotation6D,
}

impl Default for ReverseConfig {
    fn default() -> Self {
        Self {
            ddim_steps: 5,
            refine_steps: 5,
            eta: 1.0,
            init_mode: InitMode::Canonical,
            sigma_rule: SigmaRule::Standard,
            start_t: None,
            canonical_rotation: Rotation6D::identity(),
        }
    }
}

impl ReverseConfig {
    /// One DDIM step from `start_t` seeded with the previous estimate.
    pub fn tracking(start_t: usize) -> Self {
        Self {
            ddim_steps: 1,
            refine_steps: 0,
            init_mode: InitMode::PreviousEstimate,
            start_t: Some(start_t),
            ..Self::default()
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.ddim_steps + self.refine_steps
    }

    pub fn validate(&self, sched: &Schedule) -> Result<()> {
        if self.ddim_steps == 0 {
            return Err(Error::InvalidConfig("ddim_steps must be at least 1".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eta must be >= 0, got {}",
                self.eta
            )));
        }
        sched.check_timestep(self.start_t.unwrap_or(sched.steps()))?;
        self.canonical_rotation.to_matrix()?;
        Ok(())
    }
}

/// `ε_θ = (n_t − √ᾱ_t · n̂_0) / √(1 − ᾱ_t)`.
pub fn predicted_noise(
    n_t: &NormalizedPose,
    n0_hat: &NormalizedPose,
    t: usize,
    sched: &Schedule,
) -> Vector9 {
    noise_from_alpha(&n_t.0, &n0_hat.0, sched.alpha_bar(t))
}

fn noise_from_alpha(n_t: &Vector9, n0_hat: &Vector9, ab_t: f64) -> Vector9 {
    (n_t - n0_hat * ab_t.sqrt()) / (1.0 - ab_t).sqrt()
}

/// Deterministic DDIM combination for given cumulative products and σ².
/// The noise coefficient is clamped at zero, and is exactly zero when
/// `ab_prev = 1`.
pub fn ddim_combine(
    n_t: &Vector9,
    n0_hat: &Vector9,
    ab_t: f64,
    ab_prev: f64,
    sigma_sq: f64,
) -> Vector9 {
    let eps = noise_from_alpha(n_t, n0_hat, ab_t);
    let coef = if ab_prev >= 1.0 {
        0.0
    } else {
        let radicand = 1.0 - ab_prev - sigma_sq;
        if radicand < 0.0 {
            log::debug!("DDIM noise coefficient clamped (radicand {radicand:e})");
        }
        radicand.max(0.0).sqrt()
    };
    if coef == 0.0 {
        return n0_hat * ab_prev.sqrt();
    }
    n0_hat * ab_prev.sqrt() + eps * coef
}

/// One deterministic DDIM step `t → t_prev`.
pub fn ddim_step(
    n_t: &NormalizedPose,
    n0_hat: &NormalizedPose,
    t: usize,
    t_prev: usize,
    sched: &Schedule,
    eta: f64,
    rule: SigmaRule,
) -> Result<NormalizedPose> {
    if t <= t_prev {
        return Err(Error::InvalidTimestepOrder { t, t_prev });
    }
    sched.check_timestep(t)?;
    let sigma_sq = sched.sigma_sq(t, t_prev, eta, rule);
    Ok(NormalizedPose(ddim_combine(
        &n_t.0,
        &n0_hat.0,
        sched.alpha_bar(t),
        sched.alpha_bar(t_prev),
        sigma_sq,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Ddim,
    Refine,
    Direct,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Ddim => "ddim",
            StepKind::Refine => "refine",
            StepKind::Direct => "direct",
        }
    }
}

/// One iteration of a reverse run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub kind: StepKind,
    /// Conditioning timestep.
    pub t: usize,
    /// Pose after the step.
    pub pose: Pose,
    /// The denoiser's clean-pose prediction at this step.
    pub predicted: Pose,
    /// ADD of `pose` against ground truth.
    pub add: Option<f64>,
    /// Crop window around the current estimate, when it projects.
    pub crop: Option<CropRect>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// DDIM timesteps strictly decrease and every other step sits at
    /// [`REFINE_TIMESTEP`] after them.
    pub fn is_well_formed(&self) -> bool {
        let ddim: Vec<usize> = self
            .steps
            .iter()
            .filter(|s| s.kind == StepKind::Ddim)
            .map(|s| s.t)
            .collect();
        let n = ddim.len();
        ddim.windows(2).all(|w| w[1] < w[0])
            && self.steps[..n].iter().all(|s| s.kind == StepKind::Ddim)
            && self.steps[n..]
                .iter()
                .all(|s| s.kind != StepKind::Ddim && s.t == REFINE_TIMESTEP)
    }

    pub const CSV_HEADER: &'static str =
        "step,kind,t,r11,r12,r13,tx,r21,r22,r23,ty,r31,r32,r33,tz,add";

    /// One row per step: index, kind, timestep, the pose as a row-major
    /// 3×4 `[R|t]`, and ADD (empty when unknown).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (i, s) in self.steps.iter().enumerate() {
            let _ = write!(out, "{i},{},{}", s.kind.as_str(), s.t);
            for v in s.pose.to_row_major_3x4() {
                let _ = write!(out, ",{v}");
            }
            match s.add {
                Some(a) => {
                    let _ = writeln!(out, ",{a}");
                }
                None => out.push_str(",\n"),
            }
        }
        out
    }
}

/// Immutable state shared by reverse runs.
#[derive(Debug, Clone, Copy)]
pub struct Sampler<'a> {
    pub sched: &'a Schedule,
    pub norm: &'a NormConfig,
    pub fwd: &'a ForwardConfig,
    pub rcfg: &'a ReverseConfig,
}

impl<'a> Sampler<'a> {
    pub fn new(
        sched: &'a Schedule,
        norm: &'a NormConfig,
        fwd: &'a ForwardConfig,
        rcfg: &'a ReverseConfig,
    ) -> Result<Self> {
        norm.validate()?;
        fwd.scales.validate()?;
        rcfg.validate(sched)?;
        Ok(Self {
            sched,
            norm,
            fwd,
            rcfg,
        })
    }

    /// The starting pose for `rcfg.init_mode`.
    pub fn initial_pose(
        &self,
        obs: &Observation,
        previous: Option<&Pose>,
        rng: &mut SimRng,
    ) -> Result<Pose> {
        let k = &obs.intrinsics;
        match self.rcfg.init_mode {
            InitMode::Canonical => {
                let n =
                    NormalizedPose::from_parts(&self.rcfg.canonical_rotation, &Vector3::zeros());
                denormalize(&n, k, self.norm)
            }
            InitMode::PriorSample => {
                let bounds = FrustumBox::new(k, self.fwd.margin, self.norm)?;
                for _ in 0..=self.fwd.degenerate_retries {
                    let eps = standard_normal9(rng).component_mul(&self.fwd.scales.as_vector());
                    let mut n = NormalizedPose(eps);
                    n.set_translation(&bounds.clamp(&n.translation()));
                    match denormalize(&n, k, self.norm) {
                        Err(Error::DegenerateRotation6D { .. }) => continue,
                        r => return r,
                    }
                }
                Err(Error::DegenerateRotation6D {
                    eps: crate::se3::GS_EPS,
                })
            }
            InitMode::PreviousEstimate => previous.copied().ok_or_else(|| {
                Error::InvalidConfig("previous-estimate init needs a previous pose".into())
            }),
        }
    }

    fn record(
        &self,
        kind: StepKind,
        t: usize,
        pose: Pose,
        predicted: Pose,
        obs: &Observation,
        keypoints: &[Vector3<f64>],
    ) -> Result<TrajectoryStep> {
        let add = if keypoints.is_empty() {
            None
        } else {
            Some(add_metric(&obs.gt_pose, &pose, keypoints)?)
        };
        let placed: Vec<_> = keypoints.iter().map(|p| pose.transform_point(p)).collect();
        let crop = crop_region(
            &placed,
            &obs.intrinsics,
            DEFAULT_CROP_TARGET,
            DEFAULT_CROP_EXPAND,
        )
        .ok();
        Ok(TrajectoryStep {
            kind,
            t,
            pose,
            predicted,
            add,
            crop,
        })
    }

    /// DDIM over the configured sub-sequence, then the refinement tail.
    /// `keypoints` feed the per-step ADD and crop; pass an empty slice to skip both.
    pub fn run_reverse(
        &self,
        obs: &Observation,
        keypoints: &[Vector3<f64>],
        denoiser: &dyn Denoiser,
        previous: Option<&Pose>,
        rng: &mut SimRng,
    ) -> Result<(Pose, Trajectory)> {
        let k = &obs.intrinsics;
        let start = self.rcfg.start_t.unwrap_or(self.sched.steps());
        let ts = self.sched.ddim_timesteps(self.rcfg.ddim_steps, start)?;
        let mut pose = self.initial_pose(obs, previous, rng)?;
        let mut traj = Trajectory::default();
        for (i, &t) in ts.iter().enumerate() {
            let t_prev = ts.get(i + 1).copied().unwrap_or(0);
            let n_t = normalize(&pose, k, self.norm)?;
            let predicted = denoise(&pose, t, obs, denoiser, rng)?;
            let n0_hat = normalize(&predicted, k, self.norm)?;
            let n_prev = ddim_step(
                &n_t,
                &n0_hat,
                t,
                t_prev,
                self.sched,
                self.rcfg.eta,
                self.rcfg.sigma_rule,
            )?;
            pose = denormalize(&n_prev, k, self.norm)?;
            traj.steps
                .push(self.record(StepKind::Ddim, t, pose, predicted, obs, keypoints)?);
        }
        for _ in 0..self.rcfg.refine_steps {
            pose = denoise(&pose, REFINE_TIMESTEP, obs, denoiser, rng)?;
            traj.steps.push(self.record(
                StepKind::Refine,
                REFINE_TIMESTEP,
                pose,
                pose,
                obs,
                keypoints,
            )?);
        }
        Ok((pose, traj))
    }

    /// Repeated denoising at [`REFINE_TIMESTEP`] from the configured init,
    /// with no DDIM interpolation.
    pub fn run_direct_regression(
        &self,
        obs: &Observation,
        keypoints: &[Vector3<f64>],
        iterations: usize,
        denoiser: &dyn Denoiser,
        previous: Option<&Pose>,
        rng: &mut SimRng,
    ) -> Result<(Pose, Trajectory)> {
        if iterations == 0 {
            return Err(Error::InvalidIterationCount);
        }
        let mut pose = self.initial_pose(obs, previous, rng)?;
        let mut traj = Trajectory::default();
        for _ in 0..iterations {
            pose = denoise(&pose, REFINE_TIMESTEP, obs, denoiser, rng)?;
            traj.steps.push(self.record(
                StepKind::Direct,
                REFINE_TIMESTEP,
                pose,
                pose,
                obs,
                keypoints,
            )?);
        }
        Ok((pose, traj))
    }
}
