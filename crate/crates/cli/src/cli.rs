//! Command-line surface. Flags override the optional JSON config file,
//! which overrides the built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use posediff_core::{Containment, InitMode, OracleKind, SigmaRule};

use crate::commands::{self, Report};
use crate::config::{Mode, RunConfig};
use crate::error::CliError;

const SCHEDULE_HELP: &str = "\
Writes schedule.csv and schedule.json to --out.

schedule.csv columns:
  t          timestep, 1..=T
  beta       beta_t
  alpha_bar  cumulative product of (1 - beta_s) for s <= t
  sigma      DDIM sigma for the single step t -> t-1 (NaN when the rule gives a negative variance)
  sigma_sq   the signed variance behind sigma";

const DIFFUSE_HELP: &str = "\
Writes diffuse.csv and diffuse.json to --out.

diffuse.csv columns (one row per scenario and requested timestep):
  scenario, t          scenario index and diffusion timestep
  f, width, height     camera intrinsics (pixels)
  tx_n, ty_n, tz_n     normalized translation of the noisy pose
  u, v                 projected pose origin (pixels; empty when behind the camera)
  depth                camera-frame depth (m)
  in_frustum           origin inside the image shrunk by the margin and inside the depth range
  clamped              containment moved the translation
  draws                noise vectors drawn, including redraws";

const ESTIMATE_HELP: &str = "\
Writes estimate.csv, estimate.json and estimate_timing.json to --out, plus
trajectories/scenario_NNNNNN.csv with --trajectories.

estimate.csv columns (one row per scenario):
  scenario             scenario index
  mode                 ddim, direct or tracking
  f, width, height     camera intrinsics (pixels)
  steps                denoiser iterations
  add                  final ADD (m); empty when aborted
  status               ok or aborted
  reason               abort reason

Trajectory CSV columns: step, kind (ddim|refine|direct), t, the pose as a
row-major 3x4 [R|t] (r11 r12 r13 tx r21 r22 r23 ty r31 r32 r33 tz), add.

Exit status is 3 when any scenario aborts or a trajectory is malformed.";

const TRAINSIM_HELP: &str = "\
Writes trainsim.csv and trainsim.json to --out.

trainsim.csv columns (one row per training sample):
  sample, scenario, t                  sample index, scenario index, diffusion timestep
  loss_xy, loss_rot, loss_z, total     decomposed point-distance loss terms (m) and their sum";

#[derive(Debug, Parser)]
#[command(
    name = "posediff",
    version,
    about = "Frustum-constrained pose diffusion experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the noise schedule.
    #[command(after_help = SCHEDULE_HELP)]
    Schedule(RunArgs),
    /// Forward-diffuse ground-truth poses and report frustum containment.
    #[command(after_help = DIFFUSE_HELP)]
    Diffuse(RunArgs),
    /// Estimate poses with an oracle denoiser and report ADD/AUC.
    #[command(after_help = ESTIMATE_HELP)]
    Estimate(RunArgs),
    /// Run the training loop with loss logging in place of parameter updates.
    #[command(after_help = TRAINSIM_HELP)]
    Trainsim(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClampArg {
    On,
    Off,
    Reject,
}

impl From<ClampArg> for Containment {
    fn from(c: ClampArg) -> Self {
        match c {
            ClampArg::On => Containment::Clamp,
            ClampArg::Off => Containment::Off,
            ClampArg::Reject => Containment::Reject,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SigmaArg {
    Standard,
    Inverted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Canonical,
    PriorSample,
    PreviousEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ddim,
    Direct,
    Tracking,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file with any subset of the run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores). Outputs do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write one trajectory CSV per scenario (estimate only).
    #[arg(long)]
    pub trajectories: bool,

    /// Diffusion steps T.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
    /// Depth normalization offset (m).
    #[arg(long)]
    pub cz: Option<f64>,
    #[arg(long)]
    pub z_min: Option<f64>,
    #[arg(long)]
    pub z_max: Option<f64>,
    /// Containment factor sizing translation noise to the visible box.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Frustum margin as a fraction of each image side.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Frustum containment of noisy translations.
    #[arg(long, value_enum)]
    pub clamp: Option<ClampArg>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum)]
    pub sigma_rule: Option<SigmaArg>,
    #[arg(long)]
    pub ddim_steps: Option<usize>,
    #[arg(long)]
    pub refine_steps: Option<usize>,
    /// Iterations of the direct-regression baseline.
    #[arg(long)]
    pub direct_iterations: Option<usize>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Timestep the single tracking step starts from.
    #[arg(long)]
    pub track_start: Option<usize>,
    /// Perturb the tracking prior by forward diffusion at this timestep (0 = exact).
    #[arg(long)]
    pub track_perturb_t: Option<usize>,
    /// perfect, noisy:<sigma0> or biased:<pixels>.
    #[arg(long)]
    pub denoiser: Option<OracleKind>,
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub focal_min: Option<f64>,
    #[arg(long)]
    pub focal_max: Option<f64>,
    /// Keypoint observation noise (pixels).
    #[arg(long)]
    pub obs_noise: Option<f64>,
    /// Comma-separated diffusion timesteps for `diffuse`, or `all`.
    #[arg(long)]
    pub timesteps: Option<String>,
    #[arg(long)]
    pub samples_per_scenario: Option<usize>,
    #[arg(long)]
    pub auc_thresholds: Option<usize>,
    /// JSON chain description (n_joints, link_lengths, joint_axes, optional joint_limits).
    #[arg(long)]
    pub chain: Option<PathBuf>,
}

fn parse_timesteps(s: &str, steps: usize) -> Result<Vec<usize>, CliError> {
    if s.trim() == "all" {
        return Ok((1..=steps).collect());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("timesteps: cannot parse {p:?}")))
        })
        .collect()
}

impl RunArgs {
    /// Defaults, then the config file, then explicit flags.
    pub fn to_config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = v.into(); })*
            };
        }
        set!(
            steps => steps, beta_start => beta_start, beta_end => beta_end, cz => c_z,
            z_min => z_min, z_max => z_max, gamma => gamma, margin => margin, clamp => clamp,
            eta => eta, ddim_steps => ddim_steps, refine_steps => refine_steps,
            direct_iterations => direct_iterations, track_start => track_start,
            track_perturb_t => track_perturb_t, denoiser => denoiser, scenarios => scenarios,
            seed => seed, focal_min => focal_min, focal_max => focal_max, obs_noise => obs_noise_px,
            samples_per_scenario => samples_per_scenario, auc_thresholds => auc_thresholds,
        );
        if let Some(r) = self.sigma_rule {
            c.sigma_rule = match r {
                SigmaArg::Standard => SigmaRule::Standard,
                SigmaArg::Inverted => SigmaRule::Inverted,
            };
        }
        if let Some(i) = self.init {
            c.init = match i {
                InitArg::Canonical => InitMode::Canonical,
                InitArg::PriorSample => InitMode::PriorSample,
                InitArg::PreviousEstimate => InitMode::PreviousEstimate,
            };
        }
        if let Some(m) = self.mode {
            c.mode = match m {
                ModeArg::Ddim => Mode::Ddim,
                ModeArg::Direct => Mode::Direct,
                ModeArg::Tracking => Mode::Tracking,
            };
        }
        if let Some(ts) = &self.timesteps {
            c.timesteps = parse_timesteps(ts, c.steps)?;
        }
        if let Some(p) = &self.chain {
            c.chain = Some(p.clone());
        }
        Ok(c)
    }
}

/// Runs one subcommand with an already merged configuration.
pub fn execute(
    command: &Command,
    cfg: &RunConfig,
    out: &Path,
    trajectories: bool,
) -> Result<Report, CliError> {
    let res = cfg.resolve()?;
    match command {
        Command::Schedule(_) => commands::schedule::run(cfg, &res, out),
        Command::Diffuse(_) => commands::diffuse::run(cfg, &res, out),
        Command::Estimate(_) => commands::estimate::run(cfg, &res, out, trajectories),
        Command::Trainsim(_) => commands::trainsim::run(cfg, &res, out),
    }
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Schedule(a)
            | Command::Diffuse(a)
            | Command::Estimate(a)
            | Command::Trainsim(a) => a,
        }
    }
}
