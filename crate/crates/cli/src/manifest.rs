//! Run manifests: a JSON record written next to each output so the run can be repeated.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ToolkitConfig;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
    /// Number of files digested when `path` is a directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub files: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub config: ToolkitConfig,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ToolkitConfig) -> Self {
        RunManifest {
            tool: "conv",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs.push(digest_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Write `<primary>.run.json`.
    pub fn write_beside(&self, primary: &Path) -> anyhow::Result<PathBuf> {
        let mut name = primary.as_os_str().to_owned();
        name.push(".run.json");
        let path = PathBuf::from(name);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn hash_file(path: &Path, hasher: &mut Sha256) -> anyhow::Result<u64> {
    let mut f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            return Ok(total);
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
}

/// SHA-256 of a file, or of a directory as the hash over its sorted
/// `(relative path, file hash)` pairs.
pub fn digest_path(path: &Path) -> anyhow::Result<InputDigest> {
    if path.is_dir() {
        let mut outer = Sha256::new();
        let mut bytes = 0;
        let mut files = 0;
        for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
            let entry = entry.with_context(|| format!("listing {}", path.display()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(path).unwrap_or(entry.path());
            let mut inner = Sha256::new();
            bytes += hash_file(entry.path(), &mut inner)?;
            outer.update(rel.to_string_lossy().as_bytes());
            outer.update([0]);
            outer.update(inner.finalize());
            files += 1;
        }
        Ok(InputDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(outer.finalize()),
            bytes,
            files: Some(files),
        })
    } else {
        let mut h = Sha256::new();
        let bytes = hash_file(path, &mut h)?;
        Ok(InputDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(h.finalize()),
            bytes,
            files: None,
        })
    }
}
