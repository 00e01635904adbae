//! JSON report envelope shared by every subcommand.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

/// Bumped whenever a report or CSV layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct RunReport<C, R> {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: &'static str,
    /// Fully resolved configuration; feeding it back via `--config`
    /// reproduces the run.
    pub config: C,
    pub results: R,
    pub wall_clock_secs: f64,
}

impl<C: Serialize, R: Serialize> RunReport<C, R> {
    pub fn new(command: &'static str, config: C, results: R, started: Instant) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            results,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        }
    }

    pub fn to_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}
