use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use posediff_core::forward::sample_timestep;
use posediff_core::rng::{domain, stream};
use posediff_core::{decomposed_loss, diffuse, Denoiser, OracleDenoiser, OracleKind};

use crate::config::{Resolved, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, write_csv, write_json, Metadata};

use super::{mean, percentile, scenario_context, spearman, Report};

/// Loss magnitude treated as zero for the exact oracle.
pub const EXACT_LOSS_TOL: f64 = 1e-9;
const BINS: usize = 10;

#[derive(Debug, Clone, Serialize)]
struct Row {
    sample: usize,
    scenario: usize,
    t: usize,
    loss_xy: f64,
    loss_rot: f64,
    loss_z: f64,
    total: f64,
}

#[derive(Debug, Clone, Serialize)]
struct TermStats {
    mean: f64,
    p50: f64,
    p90: f64,
}

impl TermStats {
    fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            p50: percentile(xs, 50.0),
            p90: percentile(xs, 90.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Bin {
    t_lo: usize,
    t_hi: usize,
    samples: usize,
    loss_xy: TermStats,
    loss_rot: TermStats,
    loss_z: TermStats,
    total: TermStats,
}

#[derive(Serialize)]
struct Abort {
    scenario: usize,
    reason: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    metadata: Metadata<'a>,
    samples: usize,
    aborted: usize,
    aborts: Vec<Abort>,
    max_total: f64,
    bins: Vec<Bin>,
    /// Rank correlation of per-bin mean total loss against bin center.
    spearman_total_vs_t: f64,
    exact_losses_vanish: Option<bool>,
}

fn run_scenario(cfg: &RunConfig, res: &Resolved, index: usize) -> Result<Vec<Row>, CliError> {
    let (sc, model, obs) = scenario_context(cfg, res, index)?;
    let denoiser = OracleDenoiser::new(cfg.denoiser, &res.schedule);
    let mut trng = stream(cfg.seed, domain::TIMESTEP, index as u64);
    let mut drng = stream(cfg.seed, domain::DIFFUSE, index as u64);
    let mut nrng = stream(cfg.seed, domain::DENOISE, index as u64);
    let mut rows = Vec::with_capacity(cfg.samples_per_scenario);
    for j in 0..cfg.samples_per_scenario {
        let t = sample_timestep(res.schedule.steps(), &mut trng);
        let pose_t = diffuse(
            &sc.gt_pose,
            t,
            &res.schedule,
            &res.fwd,
            &sc.intrinsics,
            &res.norm,
            &mut drng,
        )?;
        let out = denoiser.predict(&pose_t, t, &obs, &mut nrng)?;
        let l = decomposed_loss(&sc.gt_pose, &pose_t, &out, &model.points, &sc.intrinsics)?;
        rows.push(Row {
            sample: index * cfg.samples_per_scenario + j,
            scenario: index,
            t,
            loss_xy: l.xy,
            loss_rot: l.rot,
            loss_z: l.z,
            total: l.total,
        });
    }
    Ok(rows)
}

pub fn run(cfg: &RunConfig, res: &Resolved, out: &Path) -> Result<Report, CliError> {
    ensure_dir(out)?;
    let results: Vec<_> = (0..cfg.scenarios)
        .into_par_iter()
        .map(|i| run_scenario(cfg, res, i))
        .collect();
    let mut rows = Vec::new();
    let mut aborts = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => rows.extend(v),
            Err(e) => aborts.push(Abort {
                scenario: i,
                reason: e.to_string(),
            }),
        }
    }
    let csv_path = out.join("trainsim.csv");
    write_csv(&csv_path, &rows)?;

    let steps = res.schedule.steps();
    let width = steps.div_ceil(BINS);
    let bins: Vec<Bin> = (0..steps.div_ceil(width))
        .map(|b| {
            let (lo, hi) = (b * width + 1, ((b + 1) * width).min(steps));
            let sel: Vec<&Row> = rows.iter().filter(|r| (lo..=hi).contains(&r.t)).collect();
            let col = |f: fn(&Row) -> f64| sel.iter().map(|r| f(r)).collect::<Vec<f64>>();
            Bin {
                t_lo: lo,
                t_hi: hi,
                samples: sel.len(),
                loss_xy: TermStats::of(&col(|r| r.loss_xy)),
                loss_rot: TermStats::of(&col(|r| r.loss_rot)),
                loss_z: TermStats::of(&col(|r| r.loss_z)),
                total: TermStats::of(&col(|r| r.total)),
            }
        })
        .collect();
    let filled: Vec<&Bin> = bins.iter().filter(|b| b.samples > 0).collect();
    let centers: Vec<f64> = filled
        .iter()
        .map(|b| (b.t_lo + b.t_hi) as f64 / 2.0)
        .collect();
    let means: Vec<f64> = filled.iter().map(|b| b.total.mean).collect();
    let max_total = rows.iter().map(|r| r.total).fold(0.0, f64::max);
    let exact = (cfg.denoiser == OracleKind::Perfect).then_some(max_total < EXACT_LOSS_TOL);

    let summary = Summary {
        metadata: Metadata::new("trainsim", cfg, &res.chain, &res.grid),
        samples: rows.len(),
        aborted: aborts.len(),
        aborts,
        max_total,
        bins,
        spearman_total_vs_t: spearman(&centers, &means),
        exact_losses_vanish: exact,
    };
    let json_path = out.join("trainsim.json");
    write_json(&json_path, &summary)?;

    let mut report = Report {
        files: vec![csv_path, json_path],
        ..Default::default()
    };
    if summary.aborted > 0 {
        report
            .failures
            .push(format!("{} scenarios aborted", summary.aborted));
    }
    if exact == Some(false) {
        report.failures.push(format!(
            "exact oracle produced loss {max_total:e} above {EXACT_LOSS_TOL:e}"
        ));
    }
    Ok(report)
}
