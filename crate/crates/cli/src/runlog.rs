//! Machine-readable run logs written next to every artifact.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub wall_time_s: f64,
    pub artifacts: Vec<String>,
}

pub struct RunTimer {
    command: String,
    seed: Option<u64>,
    config_hash: String,
    started: Instant,
}

impl RunTimer {
    pub fn start(command: &str, seed: Option<u64>, config_hash: &str) -> Self {
        RunTimer {
            command: command.to_string(),
            seed,
            config_hash: config_hash.to_string(),
            started: Instant::now(),
        }
    }

    /// Write `runlog.json` into the stage directory.
    pub fn finish(self, dir: &Path, artifacts: &[&Path]) -> Result<()> {
        let log = RunLog {
            command: self.command,
            seed: self.seed,
            config_hash: self.config_hash,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
        };
        let path = dir.join("runlog.json");
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
        let text = serde_json::to_string_pretty(&log)
            .map_err(|e| CliError::Format(format!("runlog: {e}")))?;
        std::fs::write(&path, text).map_err(CliError::io(path.display().to_string()))?;
        Ok(())
    }
}
