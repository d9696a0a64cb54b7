//! Output directory with atomic writes and a per-command run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let name = path.file_name().ok_or_else(|| {
        CliError::Config(format!("output path {} has no file name", path.display()))
    })?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    config: String,
    seed: u64,
    split_seeds: &'a [u64],
    versions: Versions,
    jobs: usize,
    wall_time_seconds: f64,
    outputs: &'a [OutputEntry],
    notes: &'a [String],
}

#[derive(Debug, Serialize)]
struct Versions {
    qoe_cli: &'static str,
    qoe_core: &'static str,
}

pub struct Outputs {
    dir: PathBuf,
    command: String,
    config_hash: String,
    files: Vec<OutputEntry>,
    notes: Vec<String>,
    started: Instant,
}

impl Outputs {
    pub fn new(dir: &Path, command: &str, cfg: &RunConfig) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_hash: cfg.hash(),
            files: Vec::new(),
            notes: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("note: {msg}");
        self.notes.push(msg);
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(OutputEntry {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(path)
    }

    /// CSV report with a leading `# config_hash: <sha256>` line.
    pub fn write_csv(&mut self, name: &str, body: &str) -> CliResult<PathBuf> {
        let text = format!("# config_hash: {}\n{body}", self.config_hash);
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes `manifest_<command>.json`; call last.
    pub fn finish(self, cfg: &RunConfig, jobs: usize) -> CliResult<()> {
        let manifest = Manifest {
            command: &self.command,
            config_hash: &self.config_hash,
            config: cfg.canonical(),
            seed: cfg.seed,
            split_seeds: &cfg.split.seeds,
            versions: Versions {
                qoe_cli: env!("CARGO_PKG_VERSION"),
                qoe_core: qoe_core::VERSION,
            },
            jobs,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            outputs: &self.files,
            notes: &self.notes,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(
            &self.dir.join(format!("manifest_{}.json", self.command)),
            json.as_bytes(),
        )
    }
}
