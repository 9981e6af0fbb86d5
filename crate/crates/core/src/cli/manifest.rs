use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::CliError;
use crate::error::Error;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every command's outputs. It is the
/// only output that carries wall-clock information.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    /// Input path to hex SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
    pub started_unix_seconds: u64,
    pub elapsed_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::runtime(Error::io(path, e), "cli"))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: &BTreeMap<String, String>, seed: u64) -> Self {
        let started = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                config: config.clone(),
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
                seed,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                started_unix_seconds: started,
                elapsed_seconds: 0.0,
            },
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, name: &str) {
        self.manifest.outputs.push(name.to_string());
    }

    pub fn finish(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        self.manifest.elapsed_seconds = self.clock.elapsed().as_secs_f64();
        self.manifest.outputs.sort();
        let path = dir.join(MANIFEST_FILE);
        super::write_json(&path, &self.manifest)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        fs::write(&p, "abc").unwrap();
        let a = sha256_file(&p).unwrap();
        assert_eq!(
            a,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        fs::write(&p, "abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), a);
        fs::write(&p, "abd").unwrap();
        assert_ne!(sha256_file(&p).unwrap(), a);
    }
}
