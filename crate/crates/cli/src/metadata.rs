use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};


/// `run_metadata_<command>.json`, so commands sharing a directory keep theirs.
pub fn metadata_file(command: &str) -> String {
    format!("run_metadata_{command}.json")
}

#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// SHA-256 of the serialized effective settings.
    pub config_hash: String,
    pub settings: Value,
    /// SHA-256 of every input file read.
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError {
        class: neuroencode::ErrorClass::Data,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    Ok(sha256_hex(&bytes))
}

impl RunMetadata {
    pub fn new(command: &str, seed: Option<u64>, settings: Value) -> Self {
        let config_hash = sha256_hex(&serde_json::to_vec(&settings).expect("settings serialize"));
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash,
            settings,
            inputs: BTreeMap::new(),
        }
    }

    /// Record `path` under `key`.
    pub fn add_input(&mut self, key: String, path: &Path) -> CliResult<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(key, digest);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(metadata_file(&self.command));
        let text = serde_json::to_string_pretty(self).expect("metadata serializes");
        crate::io::write_text(&path, &text)?;
        Ok(path)
    }
}
