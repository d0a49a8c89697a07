//! Output files and the metadata block every summary carries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use posediff_core::{AucGrid, ChainSpec};

use crate::config::RunConfig;
use crate::error::CliError;

pub const TOOL: &str = "posediff";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Enough to reproduce a run byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub chain: &'a ChainSpec,
    pub auc_rule: AucRule,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AucRule {
    pub t_min: f64,
    pub t_max: f64,
    pub n_thresholds: usize,
    pub rule: &'static str,
}

impl AucRule {
    pub fn new(grid: &AucGrid) -> Self {
        Self {
            t_min: grid.t_min,
            t_max: grid.t_max,
            n_thresholds: grid.n_thresholds,
            rule: "100 x mean over a linear threshold grid of the fraction of ADD strictly below the threshold",
        }
    }
}

impl<'a> Metadata<'a> {
    pub fn new(
        command: &'static str,
        config: &'a RunConfig,
        chain: &'a ChainSpec,
        grid: &AucGrid,
    ) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command,
            seed: config.seed,
            config,
            chain,
            auc_rule: AucRule::new(grid),
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_csv<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
