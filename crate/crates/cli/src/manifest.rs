//! Run manifests: what was run, with which configuration and seed, and
//! digests of every input and output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::failure::{CliResult, Failure};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config: Value,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| Failure::reading(path, e.into()))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64, threads: Option<usize>, config: Value) -> Self {
        let canonical = serde_json::to_vec(&config).expect("json value serializes");
        Self {
            tool: "pmtc",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            threads,
            config_sha256: sha256_hex(&canonical),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn add_outputs(&mut self, paths: &[PathBuf]) -> CliResult<()> {
        for p in paths {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            self.outputs.insert(name, file_digest(p)?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Failure::writing(&path, e))?;
        Ok(path)
    }
}
