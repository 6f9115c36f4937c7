use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use lfa::{LfaError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub name: &'static str,
    pub seconds: f64,
}

/// Wall-clock time of each named phase, in execution order.
#[derive(Debug, Default)]
pub struct PhaseTimer {
    phases: Vec<Phase>,
}

impl PhaseTimer {
    pub fn time<R>(&mut self, name: &'static str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        self.phases.push(Phase {
            name,
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn into_phases(self) -> Vec<Phase> {
        self.phases
    }
}

/// Everything needed to reproduce and audit one run.
#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub command_line: Vec<String>,
    pub subcommand: &'static str,
    pub config: serde_json::Value,
    pub seed: u64,
    pub timings: Vec<Phase>,
    pub metrics: serde_json::Value,
}

impl RunRecord {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("run.json");
        let mut text = serde_json::to_string_pretty(self).expect("record serializes");
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> LfaError {
    LfaError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// Renders a CSV writer callback into bytes and stores them at `path`.
pub fn write_csv(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| io_error(path, e))?;
    write_file(path, &buf)
}
