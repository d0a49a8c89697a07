//! Run configuration: defaults, JSON file loading and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use posediff_core::camera::DepthRange;
use posediff_core::forward::{
    DEFAULT_DEGENERATE_RETRIES, DEFAULT_GAMMA, DEFAULT_MARGIN, DEFAULT_MAX_REJECTIONS,
};
use posediff_core::schedule::{DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};
use posediff_core::{
    AucGrid, ChainSpec, Containment, ForwardConfig, InitMode, NoiseScales, NormConfig, OracleKind,
    ReverseConfig, Rotation6D, ScenarioRanges, Schedule, SigmaRule,
};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Ddim,
    Direct,
    Tracking,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Ddim => "ddim",
            Mode::Direct => "direct",
            Mode::Tracking => "tracking",
        }
    }
}

/// Every knob of a run. Serialized verbatim into each output's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub c_z: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub gamma: f64,
    pub margin: f64,
    pub clamp: Containment,
    pub eta: f64,
    pub sigma_rule: SigmaRule,
    pub ddim_steps: usize,
    pub refine_steps: usize,
    pub direct_iterations: usize,
    pub init: InitMode,
    pub mode: Mode,
    /// First timestep of the single tracking step.
    pub track_start: usize,
    /// Forward-diffusion timestep used to perturb the tracking prior; 0 keeps it at ground truth.
    pub track_perturb_t: usize,
    pub denoiser: OracleKind,
    pub scenarios: usize,
    pub seed: u64,
    pub focal_min: f64,
    pub focal_max: f64,
    pub obs_noise_px: f64,
    /// Diffusion timesteps swept by `diffuse`.
    pub timesteps: Vec<usize>,
    /// Training samples drawn per scenario by `trainsim`.
    pub samples_per_scenario: usize,
    pub auc_t_min: f64,
    pub auc_t_max: f64,
    pub auc_thresholds: usize,
    /// Path of a chain description; the built-in arm when absent.
    pub chain: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let depth = DepthRange::default();
        let grid = AucGrid::default();
        Self {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            c_z: NormConfig::default().c_z,
            z_min: depth.min,
            z_max: depth.max,
            gamma: DEFAULT_GAMMA,
            margin: DEFAULT_MARGIN,
            clamp: Containment::Clamp,
            eta: 1.0,
            sigma_rule: SigmaRule::Standard,
            ddim_steps: 5,
            refine_steps: 5,
            direct_iterations: 10,
            init: InitMode::Canonical,
            mode: Mode::Ddim,
            track_start: DEFAULT_STEPS / 5,
            track_perturb_t: 0,
            denoiser: OracleKind::Perfect,
            scenarios: 1000,
            seed: 0,
            focal_min: 400.0,
            focal_max: 900.0,
            obs_noise_px: 0.0,
            timesteps: vec![1, 25, 50, 75, 100],
            samples_per_scenario: 10,
            auc_t_min: grid.t_min,
            auc_t_max: grid.t_max,
            auc_thresholds: grid.n_thresholds,
            chain: None,
        }
    }
}

/// Fully built objects derived from a validated [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub schedule: Schedule,
    pub norm: NormConfig,
    pub fwd: ForwardConfig,
    pub reverse: ReverseConfig,
    pub tracking: ReverseConfig,
    pub ranges: ScenarioRanges,
    pub chain: ChainSpec,
    pub grid: AucGrid,
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {msg}"))
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks every field and builds the core objects.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let schedule = Schedule::linear(self.steps, self.beta_start, self.beta_end)
            .map_err(|e| field("steps/beta_start/beta_end", e))?;
        let norm = NormConfig {
            c_z: self.c_z,
            depth: DepthRange {
                min: self.z_min,
                max: self.z_max,
            },
        };
        norm.validate().map_err(|e| field("c_z/z_min/z_max", e))?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(field(
                "gamma",
                format!("must be positive, got {}", self.gamma),
            ));
        }
        if !(0.0..0.5).contains(&self.margin) {
            return Err(field(
                "margin",
                format!("must be in [0, 0.5), got {}", self.margin),
            ));
        }
        let scales =
            NoiseScales::from_gamma(self.gamma, &norm.depth).map_err(|e| field("gamma", e))?;
        let fwd = ForwardConfig {
            scales,
            margin: self.margin,
            containment: self.clamp,
            degenerate_retries: DEFAULT_DEGENERATE_RETRIES,
            max_rejections: DEFAULT_MAX_REJECTIONS,
        };
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(field("eta", format!("must be >= 0, got {}", self.eta)));
        }
        if self.ddim_steps == 0 {
            return Err(field("ddim_steps", "must be at least 1"));
        }
        if self.direct_iterations == 0 {
            return Err(field("direct_iterations", "must be at least 1"));
        }
        let reverse = ReverseConfig {
            ddim_steps: self.ddim_steps,
            refine_steps: self.refine_steps,
            eta: self.eta,
            init_mode: self.init,
            sigma_rule: self.sigma_rule,
            start_t: None,
            canonical_rotation: Rotation6D::identity(),
        };
        reverse
            .validate(&schedule)
            .map_err(|e| field("reverse", e))?;
        if schedule.check_timestep(self.track_start).is_err() {
            return Err(field(
                "track_start",
                format!("must be in 1..={}, got {}", self.steps, self.track_start),
            ));
        }
        if self.track_perturb_t > self.steps {
            return Err(field(
                "track_perturb_t",
                format!(
                    "must be in 0..={}, got {}",
                    self.steps, self.track_perturb_t
                ),
            ));
        }
        let tracking = ReverseConfig {
            eta: self.eta,
            sigma_rule: self.sigma_rule,
            ..ReverseConfig::tracking(self.track_start)
        };
        if self.scenarios == 0 {
            return Err(field("scenarios", "must be at least 1"));
        }
        if self.timesteps.is_empty() {
            return Err(field("timesteps", "must list at least one timestep"));
        }
        if let Some(t) = self
            .timesteps
            .iter()
            .find(|t| schedule.check_timestep(**t).is_err())
        {
            return Err(field(
                "timesteps",
                format!("{t} is outside 1..={}", self.steps),
            ));
        }
        if self.samples_per_scenario == 0 {
            return Err(field("samples_per_scenario", "must be at least 1"));
        }
        let ranges = ScenarioRanges {
            focal: (self.focal_min, self.focal_max),
            margin: self.margin,
            obs_noise_px: self.obs_noise_px,
            ..ScenarioRanges::default()
        };
        ranges
            .validate()
            .map_err(|e| field("focal_min/focal_max/obs_noise_px", e))?;
        let chain = match &self.chain {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                ChainSpec::from_json(&text).map_err(|e| field("chain", e))?
            }
            None => ChainSpec::default(),
        };
        let grid = AucGrid {
            t_min: self.auc_t_min,
            t_max: self.auc_t_max,
            n_thresholds: self.auc_thresholds,
        };
        grid.validate()
            .map_err(|e| field("auc_t_min/auc_t_max/auc_thresholds", e))?;
        Ok(Resolved {
            schedule,
            norm,
            fwd,
            reverse,
            tracking,
            ranges,
            chain,
            grid,
        })
    }
}
