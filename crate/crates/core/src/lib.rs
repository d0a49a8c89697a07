//! Visibility-constrained diffusion over camera-to-robot poses.
//!
//! Poses are diffused in a monocular-normalized 9-vector (6D rotation plus
//! image-relative translation) whose translation is kept inside the camera
//! frustum, and recovered with a deterministic DDIM sampler driven by a
//! denoiser that predicts a decomposed pose update. Analytic oracle
//! denoisers and a synthetic serial-link arm make the whole loop testable
//! without a trained network.

// `!(x > 0.0)` guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod denoise;
pub mod error;
pub mod forward;
pub mod metrics;
pub mod mononorm;
pub mod reverse;
pub mod rng;
pub mod robot;
pub mod scenario;
pub mod schedule;
pub mod se3;

pub use camera::{crop_region, in_frustum, project_point, CameraIntrinsics, CropRect, DepthRange};
pub use denoise::{
    apply_update, compute_gt_targets, decomposed_loss, denoise, embed_timestep, point_distance,
    Denoiser, DenoiserOutput, LossTerms, Observation, OracleDenoiser, OracleKind,
    TimestepEmbedding,
};
pub use error::{Error, Result};
pub use forward::{
    diffuse, diffuse_sample, diffuse_with_noise, Containment, DiffusedSample, ForwardConfig,
    FrustumBox, NoiseScales,
};
pub use metrics::{add_metric, auc, AucGrid};
pub use mononorm::{
    denormalize, denormalize_any_depth, normalize, NormConfig, NormalizedPose, Vector9,
};
pub use reverse::{
    ddim_combine, ddim_step, predicted_noise, InitMode, ReverseConfig, Sampler, StepKind,
    Trajectory, TrajectoryStep,
};
pub use rng::SimRng;
pub use robot::{forward_kinematics, sample_points, ChainSpec, JointConfig, RobotModel};
pub use scenario::{generate_scenarios, Scenario, ScenarioRanges, ScenarioSet};
pub use schedule::{Schedule, SigmaRule};
pub use se3::{gram_schmidt_6d, Pose, Rotation6D};
