//! Experiment harness around `posediff_core`: configuration, the four
//! subcommands and their CSV/JSON outputs.

// `!(x > 0.0)` guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::Report;
pub use config::{Mode, Resolved, RunConfig};
pub use error::CliError;
