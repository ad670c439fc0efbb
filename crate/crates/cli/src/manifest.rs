use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest.iter() {
        write!(hex, "{b:02x}").unwrap();
    }
    hex
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Writes files into one directory and remembers each one's hash.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    artifacts: BTreeMap<String, Artifact>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let bytes = bytes.as_ref();
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.insert(
            name.to_string(),
            Artifact {
                path: name.to_string(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(bytes),
            },
        );
        Ok(())
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
        text.push('\n');
        self.write(name, text)
    }

    /// Sorted by path.
    pub fn artifacts(&self) -> Vec<Artifact> {
        self.artifacts.values().cloned().collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub stage: &'static str,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Seeds {
    pub fluctuation: u64,
    pub artificial_noise: u64,
    pub mlp: Option<u64>,
}

/// `manifest.json`: every other file of the bundle with its hash, the
/// effective configuration and seeds, and how far the run got. Holds no
/// timestamps or absolute paths, so reruns reproduce it byte for byte.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub status: &'static str,
    pub stages_completed: Vec<&'static str>,
    pub failure: Option<Failure>,
    pub seeds: Seeds,
    pub case_sha256: Option<String>,
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}
