use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use posediff_core::rng::{domain, stream};
use posediff_core::{diffuse_sample, in_frustum, normalize, project_point, Containment, Scenario};

use crate::config::{Resolved, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, write_csv, write_json, Metadata};

use super::{mean, Report};

#[derive(Debug, Clone, Serialize)]
struct Row {
    scenario: usize,
    t: usize,
    f: f64,
    width: f64,
    height: f64,
    tx_n: f64,
    ty_n: f64,
    tz_n: f64,
    u: Option<f64>,
    v: Option<f64>,
    depth: f64,
    in_frustum: bool,
    clamped: bool,
    draws: usize,
}

#[derive(Debug, Clone, Serialize)]
struct Abort {
    scenario: usize,
    t: Option<usize>,
    reason: String,
}

#[derive(Debug, Clone, Serialize)]
struct PerT {
    t: usize,
    samples: usize,
    in_frustum_rate: f64,
    clamped_rate: f64,
    mean_draws: f64,
    /// Per-component mean of `(n_t − √ᾱ_t·n_0) / (√(1−ᾱ_t)·s)`.
    z_mean: Vec<f64>,
    /// Per-component sample variance of the same quantity.
    z_var: Vec<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    metadata: Metadata<'a>,
    containment: Containment,
    scenarios: usize,
    samples: usize,
    in_frustum_rate: f64,
    aborted: usize,
    aborts: Vec<Abort>,
    per_t: Vec<PerT>,
    in_frustum_guarantee_held: Option<bool>,
}

struct Draw {
    row: Row,
    z: [f64; 9],
}

fn run_scenario(cfg: &RunConfig, res: &Resolved, index: usize) -> (Vec<Draw>, Vec<Abort>) {
    let sc = match Scenario::generate(cfg.seed, index, &res.ranges, &res.chain, &res.norm) {
        Ok(sc) => sc,
        Err(e) => {
            return (
                vec![],
                vec![Abort {
                    scenario: index,
                    t: None,
                    reason: e.to_string(),
                }],
            )
        }
    };
    let k = sc.intrinsics;
    let n0 =
        normalize(&sc.gt_pose, &k, &res.norm).expect("generated poses are in front of the camera");
    let scales = res.fwd.scales.as_vector();
    let mut rng = stream(cfg.seed, domain::DIFFUSE, index as u64);
    let (mut draws, mut aborts) = (Vec::new(), Vec::new());
    for &t in &cfg.timesteps {
        match diffuse_sample(
            &sc.gt_pose,
            t,
            &res.schedule,
            &res.fwd,
            &k,
            &res.norm,
            &mut rng,
        ) {
            Ok(d) => {
                let ab = res.schedule.alpha_bar(t);
                let resid = (d.noisy.0 - n0.0 * ab.sqrt()) / (1.0 - ab).sqrt();
                let z = std::array::from_fn(|j| resid[j] / scales[j]);
                let tn = d.noisy.translation();
                let uv = project_point(&d.pose.translation, &k).ok();
                draws.push(Draw {
                    row: Row {
                        scenario: index,
                        t,
                        f: k.f,
                        width: k.width,
                        height: k.height,
                        tx_n: tn.x,
                        ty_n: tn.y,
                        tz_n: tn.z,
                        u: uv.map(|p| p.x),
                        v: uv.map(|p| p.y),
                        depth: d.pose.translation.z,
                        in_frustum: in_frustum(&d.pose, &k, res.fwd.margin, &res.norm.depth),
                        clamped: d.clamped,
                        draws: d.draws,
                    },
                    z,
                });
            }
            Err(e) => aborts.push(Abort {
                scenario: index,
                t: Some(t),
                reason: e.to_string(),
            }),
        }
    }
    (draws, aborts)
}

pub fn run(cfg: &RunConfig, res: &Resolved, out: &Path) -> Result<Report, CliError> {
    ensure_dir(out)?;
    let results: Vec<_> = (0..cfg.scenarios)
        .into_par_iter()
        .map(|i| run_scenario(cfg, res, i))
        .collect();
    let mut draws = Vec::new();
    let mut aborts = Vec::new();
    for (d, a) in results {
        draws.extend(d);
        aborts.extend(a);
    }

    let csv_path = out.join("diffuse.csv");
    write_csv(&csv_path, draws.iter().map(|d| &d.row))?;

    let per_t: Vec<PerT> = cfg
        .timesteps
        .iter()
        .map(|&t| {
            let sel: Vec<&Draw> = draws.iter().filter(|d| d.row.t == t).collect();
            let n = sel.len();
            let frac = |pred: &dyn Fn(&Draw) -> bool| {
                sel.iter().filter(|d| pred(d)).count() as f64 / n as f64
            };
            let comp = |j: usize| sel.iter().map(|d| d.z[j]).collect::<Vec<f64>>();
            let z_mean: Vec<f64> = (0..9).map(|j| mean(&comp(j))).collect();
            let z_var = (0..9)
                .map(|j| {
                    let c = comp(j);
                    c.iter().map(|x| (x - z_mean[j]).powi(2)).sum::<f64>() / (n as f64 - 1.0)
                })
                .collect();
            PerT {
                t,
                samples: n,
                in_frustum_rate: frac(&|d| d.row.in_frustum),
                clamped_rate: frac(&|d| d.row.clamped),
                mean_draws: mean(&sel.iter().map(|d| d.row.draws as f64).collect::<Vec<_>>()),
                z_mean,
                z_var,
            }
        })
        .collect();

    let inside = draws.iter().filter(|d| d.row.in_frustum).count();
    let in_frustum_rate = inside as f64 / draws.len() as f64;
    let guarantee = (res.fwd.containment != Containment::Off).then_some(inside == draws.len());
    let summary = Summary {
        metadata: Metadata::new("diffuse", cfg, &res.chain, &res.grid),
        containment: res.fwd.containment,
        scenarios: cfg.scenarios,
        samples: draws.len(),
        in_frustum_rate,
        aborted: aborts.len(),
        aborts,
        per_t,
        in_frustum_guarantee_held: guarantee,
    };
    let json_path = out.join("diffuse.json");
    write_json(&json_path, &summary)?;

    let mut report = Report {
        files: vec![csv_path, json_path],
        ..Default::default()
    };
    if summary.aborted > 0 {
        report
            .failures
            .push(format!("{} diffusion draws aborted", summary.aborted));
    }
    if guarantee == Some(false) {
        report.failures.push(format!(
            "in-frustum rate {in_frustum_rate} below 1 with containment on"
        ));
    }
    Ok(report)
}
