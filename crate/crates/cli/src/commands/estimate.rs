use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use posediff_core::rng::{domain, stream};
use posediff_core::{add_metric, diffuse, OracleDenoiser, Pose, Sampler, Trajectory};

use crate::config::{Mode, Resolved, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, write_csv, write_json, write_text, Metadata};

use super::{mean, percentile, scenario_context, Report};

/// Largest abort fraction a run may have and still count as healthy.
pub const ABORT_BUDGET: f64 = 0.001;

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub scenario: usize,
    pub mode: &'static str,
    pub f: f64,
    pub width: f64,
    pub height: f64,
    pub steps: usize,
    pub add: Option<f64>,
    pub status: &'static str,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Abort {
    pub scenario: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub metadata: Metadata<'a>,
    pub mode: &'static str,
    pub scenarios: usize,
    pub completed: usize,
    pub aborted: usize,
    pub abort_rate: f64,
    pub abort_rate_within_budget: bool,
    pub aborts: Vec<Abort>,
    /// Aborted scenarios count as misses at every threshold.
    pub auc: f64,
    pub mean_add: f64,
    pub median_add: f64,
    pub p90_add: f64,
    pub max_add: f64,
    pub malformed_trajectories: usize,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    mode: &'static str,
    scenarios: usize,
    threads: usize,
    wall_seconds: f64,
    /// Mean time inside the estimator per scenario (excludes setup and IO).
    estimator_seconds_per_scenario: f64,
}

/// Per-scenario outcome, also used by in-process callers.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub row: Row,
    pub trajectory: Option<Trajectory>,
    pub seconds: f64,
}

fn steps_for(cfg: &RunConfig, res: &Resolved) -> usize {
    match cfg.mode {
        Mode::Ddim => res.reverse.total_iterations(),
        Mode::Direct => cfg.direct_iterations,
        Mode::Tracking => res.tracking.total_iterations(),
    }
}

/// Estimates scenario `index` under `cfg.mode`.
pub fn run_scenario(cfg: &RunConfig, res: &Resolved, index: usize) -> Outcome {
    let mut row = Row {
        scenario: index,
        mode: cfg.mode.as_str(),
        f: f64::NAN,
        width: f64::NAN,
        height: f64::NAN,
        steps: steps_for(cfg, res),
        add: None,
        status: "aborted",
        reason: None,
    };
    let mut seconds = 0.0;
    let result = (|| -> Result<(Pose, Trajectory, Pose, Vec<_>), CliError> {
        let (sc, model, obs) = scenario_context(cfg, res, index)?;
        row.f = sc.intrinsics.f;
        row.width = sc.intrinsics.width;
        row.height = sc.intrinsics.height;
        let denoiser = OracleDenoiser::new(cfg.denoiser, &res.schedule);
        let mut rng = stream(cfg.seed, domain::DENOISE, index as u64);
        let start = Instant::now();
        let (pose, traj) = match cfg.mode {
            Mode::Ddim => {
                let sampler = Sampler::new(&res.schedule, &res.norm, &res.fwd, &res.reverse)?;
                sampler.run_reverse(&obs, &model.keypoints, &denoiser, None, &mut rng)?
            }
            Mode::Direct => {
                let sampler = Sampler::new(&res.schedule, &res.norm, &res.fwd, &res.reverse)?;
                sampler.run_direct_regression(
                    &obs,
                    &model.keypoints,
                    cfg.direct_iterations,
                    &denoiser,
                    None,
                    &mut rng,
                )?
            }
            Mode::Tracking => {
                let previous = if cfg.track_perturb_t == 0 {
                    sc.gt_pose
                } else {
                    let mut trng = stream(cfg.seed, domain::TRACKING, index as u64);
                    diffuse(
                        &sc.gt_pose,
                        cfg.track_perturb_t,
                        &res.schedule,
                        &res.fwd,
                        &sc.intrinsics,
                        &res.norm,
                        &mut trng,
                    )?
                };
                let sampler = Sampler::new(&res.schedule, &res.norm, &res.fwd, &res.tracking)?;
                sampler.run_reverse(&obs, &model.keypoints, &denoiser, Some(&previous), &mut rng)?
            }
        };
        seconds = start.elapsed().as_secs_f64();
        Ok((pose, traj, sc.gt_pose, model.keypoints))
    })();
    match result {
        Ok((pose, traj, gt, keypoints)) => match add_metric(&gt, &pose, &keypoints) {
            Ok(add) => {
                row.add = Some(add);
                row.status = "ok";
                Outcome {
                    row,
                    trajectory: Some(traj),
                    seconds,
                }
            }
            Err(e) => {
                row.reason = Some(e.to_string());
                Outcome {
                    row,
                    trajectory: None,
                    seconds,
                }
            }
        },
        Err(e) => {
            log::warn!("scenario {index} aborted: {e}");
            row.reason = Some(e.to_string());
            Outcome {
                row,
                trajectory: None,
                seconds,
            }
        }
    }
}

/// All scenarios in index order, fanned out over the current rayon pool.
pub fn run_all(cfg: &RunConfig, res: &Resolved) -> Vec<Outcome> {
    (0..cfg.scenarios)
        .into_par_iter()
        .map(|i| run_scenario(cfg, res, i))
        .collect()
}

pub fn summarize<'a>(
    cfg: &'a RunConfig,
    res: &'a Resolved,
    outcomes: &[Outcome],
) -> Result<Summary<'a>, CliError> {
    let adds: Vec<f64> = outcomes.iter().filter_map(|o| o.row.add).collect();
    let with_misses: Vec<f64> = outcomes
        .iter()
        .map(|o| o.row.add.unwrap_or(f64::NAN))
        .collect();
    let aborts: Vec<Abort> = outcomes
        .iter()
        .filter(|o| o.row.add.is_none())
        .map(|o| Abort {
            scenario: o.row.scenario,
            reason: o.row.reason.clone().unwrap_or_default(),
        })
        .collect();
    let abort_rate = aborts.len() as f64 / outcomes.len() as f64;
    let malformed = outcomes
        .iter()
        .filter_map(|o| o.trajectory.as_ref())
        .filter(|t| !t.is_well_formed())
        .count();
    Ok(Summary {
        metadata: Metadata::new("estimate", cfg, &res.chain, &res.grid),
        mode: cfg.mode.as_str(),
        scenarios: outcomes.len(),
        completed: adds.len(),
        aborted: aborts.len(),
        abort_rate,
        abort_rate_within_budget: abort_rate <= ABORT_BUDGET,
        aborts,
        auc: res.grid.auc(&with_misses)?,
        mean_add: mean(&adds),
        median_add: percentile(&adds, 50.0),
        p90_add: percentile(&adds, 90.0),
        max_add: adds.iter().cloned().fold(f64::NAN, f64::max),
        malformed_trajectories: malformed,
    })
}

pub fn run(
    cfg: &RunConfig,
    res: &Resolved,
    out: &Path,
    trajectories: bool,
) -> Result<Report, CliError> {
    ensure_dir(out)?;
    let wall = Instant::now();
    let outcomes = run_all(cfg, res);
    let wall_seconds = wall.elapsed().as_secs_f64();

    let csv_path = out.join("estimate.csv");
    write_csv(&csv_path, outcomes.iter().map(|o| &o.row))?;
    let summary = summarize(cfg, res, &outcomes)?;
    let json_path = out.join("estimate.json");
    write_json(&json_path, &summary)?;
    let timing_path = out.join("estimate_timing.json");
    write_json(
        &timing_path,
        &Timing {
            mode: cfg.mode.as_str(),
            scenarios: outcomes.len(),
            threads: rayon::current_num_threads(),
            wall_seconds,
            estimator_seconds_per_scenario: mean(
                &outcomes.iter().map(|o| o.seconds).collect::<Vec<_>>(),
            ),
        },
    )?;
    let mut report = Report {
        files: vec![csv_path, json_path, timing_path],
        ..Default::default()
    };
    if trajectories {
        let dir = out.join("trajectories");
        ensure_dir(&dir)?;
        for o in &outcomes {
            if let Some(t) = &o.trajectory {
                let p = dir.join(format!("scenario_{:06}.csv", o.row.scenario));
                write_text(&p, &t.to_csv())?;
                report.files.push(p);
            }
        }
    }
    if summary.aborted > 0 {
        report.failures.push(format!(
            "{} of {} scenarios aborted (rate {:.4}%, budget {}%)",
            summary.aborted,
            summary.scenarios,
            100.0 * summary.abort_rate,
            100.0 * ABORT_BUDGET
        ));
    }
    if summary.malformed_trajectories > 0 {
        report.failures.push(format!(
            "{} trajectories violate the timestep ordering",
            summary.malformed_trajectories
        ));
    }
    Ok(report)
}
