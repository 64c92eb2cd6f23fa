//! Run manifest and the shared config/exit-code plumbing.

use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use rcsns::config::RunConfig;
use rcsns::Error;
use serde::Serialize;

use crate::exit;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// Hard checks decide the exit status.
    pub hard: bool,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, hard: bool, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            hard,
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }

    /// Passes when `value >= tolerance`.
    pub fn at_least(name: &str, hard: bool, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            hard,
            passed: value >= tolerance,
            value,
            tolerance,
        }
    }

    pub fn flag(name: &str, hard: bool, passed: bool) -> Self {
        Self {
            name: name.to_string(),
            hard,
            passed,
            value: if passed { 1.0 } else { 0.0 },
            tolerance: 1.0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub status: String,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub wall_seconds: f64,
    pub config: RunConfig,
    /// The configuration as it was run, overrides applied.
    pub config_toml: String,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct Clock {
    started_at: String,
    start: std::time::Instant,
}

impl Clock {
    pub fn start() -> Self {
        Self {
            started_at: now(),
            start: std::time::Instant::now(),
        }
    }

    pub fn finish(
        &self,
        command: &str,
        status: &str,
        config: RunConfig,
        checks: Vec<Check>,
        error: Option<String>,
    ) -> Manifest {
        Manifest {
            command: command.to_string(),
            status: status.to_string(),
            code_version: format!("rcsns {}", env!("CARGO_PKG_VERSION")),
            started_at: self.started_at.clone(),
            finished_at: now(),
            wall_seconds: self.start.elapsed().as_secs_f64(),
            config_toml: config.to_toml().unwrap_or_default(),
            config,
            checks,
            error,
        }
    }
}

/// Writes `manifest.json` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, manifest: &Manifest) -> anyhow::Result<()> {
    let tmp = dir.join("manifest.json.tmp");
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&tmp, text + "\n").with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, dir.join("manifest.json"))?;
    Ok(())
}

/// Loads a config and applies command-line overrides.
pub fn load_config(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = out {
        cfg.output = out;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Exit class of a library error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::InvalidGrid(_) | Error::Unresolvable { .. } => {
            exit::BAD_INPUT
        }
        Error::InvalidEnsemble(_) | Error::InvalidParameter(_) | Error::InvalidLightSpeed(_) => exit::BAD_INPUT,
        Error::Divergence { .. } => exit::DIVERGED,
        _ => exit::NUMERICAL,
    }
}
