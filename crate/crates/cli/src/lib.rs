//! Config-driven runs of every pipeline with deterministic reports.

pub mod commands;
pub mod config;
pub mod report;

use crate::commands::{dispatch, Status, COMMANDS};
use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// A finished run: its status and the report body.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub status: Status,
    pub body: String,
}

/// Run `command` (e.g. `"tower prop15"`) on config text. Errors carry the
/// exit code and a message.
pub fn run(command: &str, config_text: &str, seed: u64, format: Format) -> Result<Rendered, (i32, String)> {
    if !COMMANDS.contains(&command) {
        return Err((3, format!("unknown command `{command}`; available: {}", COMMANDS.join(", "))));
    }
    let mut cfg = Config::parse(config_text).map_err(|e| (3, e.to_string()))?;
    let outcome = dispatch(command, &mut cfg, seed).map_err(|f| (f.exit_code(), format!("{command}: {}", f.message())))?;
    let body = match format {
        Format::Json => report::json(command, &cfg, seed, &outcome),
        Format::Csv => report::csv(&outcome),
    };
    Ok(Rendered { status: outcome.status, body })
}
