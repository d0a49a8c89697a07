use std::path::Path;

use serde::Serialize;

use crate::config::{Resolved, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, write_csv, write_json, Metadata};

use super::Report;

#[derive(Serialize)]
struct Row {
    t: usize,
    beta: f64,
    alpha_bar: f64,
    /// For the single step `t → t−1`; NaN when the rule gives a negative variance.
    sigma: f64,
    sigma_sq: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    metadata: Metadata<'a>,
    steps: usize,
    alpha_bar_first: f64,
    alpha_bar_last: f64,
    strictly_decreasing: bool,
    ddim_timesteps: Vec<usize>,
}

pub fn run(cfg: &RunConfig, res: &Resolved, out: &Path) -> Result<Report, CliError> {
    ensure_dir(out)?;
    let s = &res.schedule;
    let rows = (1..=s.steps()).map(|t| Row {
        t,
        beta: s.beta(t),
        alpha_bar: s.alpha_bar(t),
        sigma: s.sigma(t, t - 1, cfg.eta, cfg.sigma_rule),
        sigma_sq: s.sigma_sq(t, t - 1, cfg.eta, cfg.sigma_rule),
    });
    let csv_path = out.join("schedule.csv");
    write_csv(&csv_path, rows)?;

    let strictly_decreasing = s.alpha_bars().windows(2).all(|w| w[1] < w[0]);
    let summary = Summary {
        metadata: Metadata::new("schedule", cfg, &res.chain, &res.grid),
        steps: s.steps(),
        alpha_bar_first: s.alpha_bar(1),
        alpha_bar_last: s.alpha_bar(s.steps()),
        strictly_decreasing,
        ddim_timesteps: s.ddim_timesteps(cfg.ddim_steps, s.steps())?,
    };
    let json_path = out.join("schedule.json");
    write_json(&json_path, &summary)?;

    let mut report = Report {
        files: vec![csv_path, json_path],
        ..Default::default()
    };
    if !strictly_decreasing {
        report
            .failures
            .push("alpha_bar is not strictly decreasing".into());
    }
    Ok(report)
}
