use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub hash: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_paths: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

/// Git's object id for a blob, in its SHA-256 object format.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("sha256:{}", hex::encode(h.finalize()))
}

fn hash_file(path: &Path, shown_as: String) -> Result<FileHash, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok(FileHash {
        path: shown_as,
        hash: blob_hash(&bytes),
    })
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_paths: Vec::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config(&mut self, path: &Path) -> Result<(), CliError> {
        self.config_paths.push(path.display().to_string());
        self.input(path)
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(hash_file(path, path.display().to_string())?);
        Ok(())
    }

    /// Records an output by its path relative to `root`.
    pub fn output(&mut self, root: &Path, path: &Path) -> Result<(), CliError> {
        let shown = path.strip_prefix(root).unwrap_or(path).display().to_string();
        self.outputs.push(hash_file(path, shown)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(path, text).map_err(|e| CliError::from(e).context(path.display()))
    }
}
