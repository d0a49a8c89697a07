//! Subcommand implementations. Each writes its files under an output
//! directory and returns a [`Report`].

pub mod diffuse;
pub mod estimate;
pub mod schedule;
pub mod trainsim;

use std::path::PathBuf;

use posediff_core::rng::{domain, stream};
use posediff_core::robot::LOSS_LINK_POINTS;
use posediff_core::{Observation, RobotModel, Scenario};

use crate::config::{Resolved, RunConfig};
use crate::error::CliError;

/// Files written and embedded checks that failed.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Scenario `index`, its robot model and the observation it yields.
pub(crate) fn scenario_context(
    cfg: &RunConfig,
    res: &Resolved,
    index: usize,
) -> Result<(Scenario, RobotModel, Observation), CliError> {
    let sc = Scenario::generate(cfg.seed, index, &res.ranges, &res.chain, &res.norm)?;
    let model = RobotModel::new(&res.chain, &sc.joints, LOSS_LINK_POINTS)?;
    let mut rng = stream(cfg.seed, domain::OBSERVATION, index as u64);
    let obs = Observation::new(
        sc.gt_pose,
        sc.intrinsics,
        &model,
        sc.joints.clone(),
        sc.obs_noise_px,
        &mut rng,
    );
    Ok((sc, model, obs))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Nearest-rank percentile of an unsorted sample.
pub(crate) fn percentile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub(crate) fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
