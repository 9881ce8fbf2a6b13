//! Run manifests: every artifact-producing command records what ran,
//! with what configuration, next to its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clinex_core::checkpoint::write_atomic;
use serde::Serialize;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
    pub tool_version: String,
    /// Wall-clock seconds; the only non-reproducible field.
    pub wall_clock_secs: f64,
}

pub struct RunTimer {
    command: String,
    started: Instant,
}

impl RunTimer {
    pub fn start(command: &str) -> RunTimer {
        RunTimer { command: command.to_string(), started: Instant::now() }
    }

    /// Write `run_manifest.json` into `dir` (creating it), atomically.
    pub fn write(
        &self,
        dir: &Path,
        seed: u64,
        inputs: &[&Path],
        outputs: &[&Path],
        config: serde_json::Value,
    ) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let manifest = RunManifest {
            command: self.command.clone(),
            argv: std::env::args().skip(1).collect(),
            seed,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = dir.join("run_manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}
