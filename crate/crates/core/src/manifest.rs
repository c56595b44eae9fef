//! Run manifests: enough to rerun a command and check its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_hash: Option<String>,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub version: String,
    /// Output path to SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; excluded from comparisons.
    pub timestamp: u64,
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest_bytes(&bytes))
}

impl RunManifest {
    pub fn new(command: Vec<String>) -> Self {
        RunManifest {
            command,
            config_hash: None,
            inputs: BTreeMap::new(),
            seeds: Vec::new(),
            version: VERSION.to_string(),
            outputs: BTreeMap::new(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    pub fn input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.inputs.insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.outputs.insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn config(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.config_hash = Some(digest_file(path.as_ref())?);
        self.input(path)
    }

    /// Record every regular file under `dir`, recursively, keyed by its path
    /// relative to `dir` so that runs into different directories compare equal.
    pub fn outputs_in(&mut self, dir: impl AsRef<Path>, skip: &Path) -> Result<()> {
        let dir = dir.as_ref();
        let mut files = Vec::new();
        collect_files(dir, &mut files)?;
        files.sort();
        for f in files.into_iter().filter(|f| f != skip) {
            let key = f.strip_prefix(dir).unwrap_or(&f).display().to_string();
            self.outputs.insert(key, digest_file(&f)?);
        }
        Ok(())
    }

    /// Inputs whose current digest differs from the recorded one.
    pub fn changed_inputs(&self) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for (path, digest) in &self.inputs {
            if digest_file(path)? != *digest {
                changed.push(path.clone());
            }
        }
        Ok(changed)
    }

    /// Same command, inputs, seeds and output digests; the timestamp is ignored.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        self.command == other.command
            && self.config_hash == other.config_hash
            && self.inputs == other.inputs
            && self.seeds == other.seeds
            && self.outputs == other.outputs
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Manifest location for a single output file: `<file>.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
