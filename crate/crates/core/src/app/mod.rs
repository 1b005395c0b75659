//! Command layer: run configuration, the commands behind the `ibp` binary,
//! and a small SVG renderer.

pub mod cli;
pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{exit_code, run, CommandReport, Outcome};
pub use config::{CommandConfig, PredictorSpec, RunConfig};
