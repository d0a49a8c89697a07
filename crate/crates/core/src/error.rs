use thiserror::Error;

/// Errors produced by the pose diffusion machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("6D rotation is degenerate (first column or orthogonal residual below {eps:e})")]
    DegenerateRotation6D { eps: f64 },
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("depth must be positive (z = {z})")]
    NonPositiveDepth { z: f64 },
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("input list is empty")]
    EmptyInput,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid schedule parameters: {0}")]
    InvalidScheduleParams(String),
    #[error("timestep {t} outside 1..={max}")]
    InvalidTimestep { t: usize, max: usize },
    #[error("timesteps must strictly decrease (t = {t}, t_prev = {t_prev})")]
    InvalidTimestepOrder { t: usize, t_prev: usize },
    #[error("embedding size must be even, got {0}")]
    OddEmbeddingSize(usize),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("iteration count must be at least 1")]
    InvalidIterationCount,
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rejection sampling exhausted after {0} draws")]
    RejectionExhausted(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
