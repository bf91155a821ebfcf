use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Derives an independent stream seed for one pipeline purpose.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(seed.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    /// Relative to the run directory, or as given for external inputs.
    pub path: String,
    pub sha256: String,
}

/// Record of one stage run. Contains nothing time- or host-dependent, so a
/// rerun with the same inputs reproduces it byte for byte; wall-clock data
/// goes to a separate `<stage>.timing.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub params: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }

    pub fn output(&self, path: &str) -> Option<&Artifact> {
        self.outputs.iter().find(|a| a.path == path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: f64,
    pub finished_unix: f64,
}

/// A run directory holding every stage's artifacts and manifests.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(RunDir { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::Usage(format!("run directory {} does not exist", root.display())));
        }
        Ok(RunDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    pub fn read_raw(&self, name: &str) -> Result<Vec<u8>> {
        let p = self.path(name);
        fs::read(&p).map_err(|e| Error::io(p, e))
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<Artifact> {
        let p = self.path(name);
        let bytes = bytes.as_ref();
        fs::write(&p, bytes).map_err(|e| Error::io(p, e))?;
        Ok(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        })
    }

    pub fn manifest(&self, stage: &str) -> Result<RunManifest> {
        let name = format!("{stage}.manifest.json");
        if !self.exists(&name) {
            return Err(Error::Usage(format!(
                "missing {name} in {}; run the `{stage}` stage first",
                self.root.display()
            )));
        }
        let bytes = self.read_raw(&name)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::parse(1, format!("{name} is not UTF-8")))?;
        RunManifest::parse(&text)
    }

    /// Reads an artifact produced by an upstream stage, checking it against
    /// the hash in that stage's manifest.
    pub fn read_verified(&self, upstream: &RunManifest, name: &str) -> Result<(Vec<u8>, Artifact)> {
        let recorded = upstream.output(name).ok_or_else(|| {
            Error::Usage(format!("manifest of `{}` does not list {name}", upstream.command))
        })?;
        let bytes = self.read_raw(name)?;
        let actual = sha256_hex(&bytes);
        if actual != recorded.sha256 {
            return Err(Error::StaleArtifact {
                path: self.path(name),
                expected: recorded.sha256.clone(),
                actual,
            });
        }
        Ok((bytes, recorded.clone()))
    }

    pub fn read_verified_text(&self, upstream: &RunManifest, name: &str) -> Result<(String, Artifact)> {
        let (bytes, art) = self.read_verified(upstream, name)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::parse(1, format!("{name} is not UTF-8")))?;
        Ok((text, art))
    }

    pub fn write_manifest(&self, stage: &str, m: &RunManifest, timing: Timing) -> Result<Artifact> {
        let t = serde_json::to_string_pretty(&timing).expect("timing serializes");
        self.write(&format!("{stage}.timing.json"), t + "\n")?;
        self.write(&format!("{stage}.manifest.json"), m.to_json())
    }
}
