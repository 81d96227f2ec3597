//! Run manifest: a JSON record binding the config hash, seed, artifact
//! version, and the checksums of every file a command wrote. Re-running
//! the same config and seed must reproduce the listed checksums byte for
//! byte (the manifest itself carries a timestamp and is not expected to
//! be identical).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct ManifestDoc {
    schema_version: u32,
    command: String,
    config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    artifact_version: String,
    created_unix_seconds: u64,
    outputs: Vec<OutputEntry>,
}

/// Collects written files, then persists `manifest.json` next to them.
pub struct RunManifest {
    out_dir: PathBuf,
    command: String,
    config_sha256: String,
    seed: Option<u64>,
    outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn new(out_dir: &Path, command: &str, config_bytes: &[u8], seed: Option<u64>) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_bytes),
            seed,
            outputs: Vec::new(),
        }
    }

    /// Write one output file and record its checksum.
    pub fn write_file(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents)?;
        self.outputs.push(OutputEntry {
            file: name.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len(),
        });
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let doc = ManifestDoc {
            schema_version: crate::config::SCHEMA_VERSION,
            command: self.command,
            config_sha256: self.config_sha256,
            seed: self.seed,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: self.outputs,
        };
        fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
        fs::write(&path, text)?;
        Ok(path)
    }
}
