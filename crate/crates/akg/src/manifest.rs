//! Append-only run manifests.
//!
//! Every command that writes artifacts appends one JSON line describing
//! the invocation: arguments, the effective configuration, input hashes,
//! stage timings, outputs and the completion ledger summary. Re-running
//! the recorded arguments under the mock backend reproduces the outputs.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::pipeline::{sha256_file, StageTiming};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    pub started_unix: u64,
    pub config: Config,
    pub inputs: BTreeMap<String, String>,
    pub stage_timings: BTreeMap<String, u128>,
    pub outputs: Vec<OutputRecord>,
    pub ledger_summary: BTreeMap<String, usize>,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config: &Config) -> Self {
        RunManifest {
            command: command.to_string(),
            args,
            tool_version: crate::pipeline::pipeline_version(),
            started_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config: config.clone(),
            inputs: BTreeMap::new(),
            stage_timings: BTreeMap::new(),
            outputs: Vec::new(),
            ledger_summary: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(OutputRecord {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn timings(&mut self, timings: &[StageTiming]) {
        for t in timings {
            self.stage_timings.insert(t.stage.clone(), t.millis);
        }
    }

    /// Append as one JSON line, creating the file if needed.
    pub fn append_to(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let line = serde_json::to_string(self).map_err(std::io::Error::other)?;
        writeln!(file, "{line}")
    }
}

/// Read every manifest line of a file.
pub fn read_manifests(path: &Path) -> std::io::Result<Vec<RunManifest>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}
