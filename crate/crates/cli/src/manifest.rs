//! Run manifests: a sidecar `<output>.manifest.json` next to the primary
//! artifact of every run. Timestamps live here and nowhere else.

use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective settings after merging the config file and flags.
    pub config: Value,
    pub inputs: Vec<InputHash>,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub outputs: Vec<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn hash_file(path: &Path) -> io::Result<InputHash> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(InputHash {
        path: path.display().to_string(),
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(MANIFEST_SUFFIX);
    output.with_file_name(name)
}

impl RunManifest {
    pub fn start<S: Serialize>(command: &str, config: &S, seed: Option<u64>) -> anyhow::Result<Self> {
        Ok(RunManifest {
            tool: "dosewatch".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            seed,
            started_at: now(),
            finished_at: None,
            outputs: Vec::new(),
        })
    }

    /// Hashes inputs up front, before anything can overwrite them.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let h = hash_file(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.push(h);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes the manifest next to `primary` and returns its path.
    pub fn finish(mut self, primary: &Path) -> anyhow::Result<PathBuf> {
        self.finished_at = Some(now());
        self.write(primary)
    }

    /// Writes without a finish time, for long-running commands.
    pub fn write(&self, primary: &Path) -> anyhow::Result<PathBuf> {
        let path = manifest_path(primary);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_match_known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        std::fs::write(&p, "abc").unwrap();
        let h = hash_file(&p).unwrap();
        assert_eq!(h.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(h.bytes, 3);
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(manifest_path(Path::new("out/m.model")), Path::new("out/m.model.manifest.json"));
        assert_eq!(manifest_path(Path::new("queue")), Path::new("queue.manifest.json"));
    }
}
