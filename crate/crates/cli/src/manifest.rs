use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use hdsa::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Everything needed to rerun a command and compare its outputs. Holds no
/// timestamps or absolute paths, so reruns produce identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub versions: BTreeMap<String, String>,
    /// Hash of the config file as read, if one was given.
    pub config_sha256: Option<String>,
    pub seed: u64,
    /// The config after command-line overrides.
    pub config: RunConfig,
    /// Input files by role, with their hashes.
    pub inputs: BTreeMap<String, String>,
    /// Output files in the directory, with their hashes.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, config_sha256: Option<String>) -> Self {
        let versions = [
            ("hdsa", hdsa::VERSION),
            ("hdsa-tracer", hdsa_tracer::VERSION),
            ("hdsa-cli", env!("CARGO_PKG_VERSION")),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            command: command.to_string(),
            versions,
            config_sha256,
            seed: config.seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(mut self, role: &str, path: &Path) -> Result<Self> {
        self.inputs.insert(role.to_string(), file_sha256(path)?);
        Ok(self)
    }

    /// Hashes every other file in `dir` and writes the manifest there.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.outputs.clear();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.file_type()?.is_file() && name != MANIFEST_FILE {
                self.outputs.insert(name, file_sha256(&entry.path())?);
            }
        }
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }
}
