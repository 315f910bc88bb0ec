use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved configuration, sufficient to re-run the command.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<Artifact, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Artifact {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// One digest over several files, in the given order.
pub fn hash_files(label: &str, paths: &[PathBuf]) -> Result<Artifact, CliError> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(Artifact {
        path: label.to_string(),
        sha256: hex::encode(h.finalize()),
    })
}

pub struct RunRecorder {
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    inputs: Vec<Artifact>,
    outputs: Vec<PathBuf>,
    started: u64,
}

impl RunRecorder {
    pub fn start(command: &str, config: impl Serialize, seeds: Vec<u64>) -> Result<Self, CliError> {
        Ok(RunRecorder {
            command: command.into(),
            config: serde_json::to_value(config)?,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: unix_now(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(hash_file(path)?);
        Ok(())
    }

    pub fn input_artifact(&mut self, a: Artifact) {
        self.inputs.push(a);
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Hashes every declared output and writes the manifest to `path`.
    pub fn finish(self, path: &Path) -> Result<RunManifest, CliError> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| hash_file(p))
            .collect::<Result<Vec<_>, _>>()?;
        let m = RunManifest {
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
            started_unix: self.started,
            finished_unix: unix_now(),
        };
        fs::write(path, serde_json::to_string_pretty(&m)?).map_err(|e| CliError::io(path, e))?;
        Ok(m)
    }
}
