//! Per-command manifest: what was read, what was written, and their hashes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the run directory when the file lies inside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path, run_dir: &Path) -> Result<FileHash, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let shown = path.strip_prefix(run_dir).unwrap_or(path);
    Ok(FileHash {
        path: shown.to_string_lossy().replace('\\', "/"),
        sha256: sha256_hex(&bytes),
    })
}

/// Collects inputs and outputs of one command, then writes
/// `manifest_<command>.json` into the run directory.
pub struct Recorder {
    run_dir: PathBuf,
    command: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(run_dir: &Path, command: &str) -> Self {
        Self {
            run_dir: run_dir.to_path_buf(),
            command: command.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Returns `path` after checking that it exists.
    pub fn input(&mut self, path: PathBuf) -> Result<PathBuf, CliError> {
        if !path.is_file() {
            return Err(CliError::MissingArtifact(path));
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    pub fn output(&mut self, path: PathBuf) -> PathBuf {
        self.outputs.push(path.clone());
        path
    }

    pub fn finish(self, config: &crate::config::RunConfig) -> Result<PathBuf, CliError> {
        let config_json = serde_json::to_value(config)?;
        let config_bytes = serde_json::to_vec(&config_json)?;
        let hash_all = |v: &[PathBuf]| -> Result<Vec<FileHash>, CliError> {
            let mut out = v.iter().map(|p| hash_file(p, &self.run_dir)).collect::<Result<Vec<_>, _>>()?;
            out.sort_by(|a, b| a.path.cmp(&b.path));
            out.dedup();
            Ok(out)
        };
        let m = Manifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_sha256: sha256_hex(&config_bytes),
            config: config_json,
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(&self.outputs)?,
        };
        let path = self.run_dir.join(format!("manifest_{}.json", self.command));
        let text = serde_json::to_string_pretty(&m)?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
