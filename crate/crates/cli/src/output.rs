//! Run directories and their manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub version: String,
    pub config: serde_json::Value,
    /// SHA-256 over the input dataset files, when there is an input dataset.
    pub dataset_fingerprint: Option<String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct RunDir {
    path: PathBuf,
    started_at: String,
}

impl RunDir {
    /// Creates `path`. An existing empty directory is reused; an earlier run
    /// directory (one holding a manifest) is replaced only with `force`.
    pub fn create(path: &Path, force: bool) -> Result<Self> {
        if path.exists() {
            let empty = path.is_dir() && fs::read_dir(path)?.next().is_none();
            if !empty {
                if !force {
                    bail!(
                        "output directory {} already exists (use --force to replace it)",
                        path.display()
                    );
                }
                if !path.join(MANIFEST_FILE).is_file() {
                    bail!(
                        "refusing to replace {}: it does not look like an output directory (no {MANIFEST_FILE})",
                        path.display()
                    );
                }
                fs::remove_dir_all(path).with_context(|| format!("removing {}", path.display()))?;
            }
        }
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            started_at: now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(&self, config: &impl Serialize, dataset_fingerprint: Option<String>) -> Result<()> {
        let manifest = RunManifest {
            command: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
            dataset_fingerprint,
            started_at: self.started_at.clone(),
            finished_at: now(),
        };
        self.write_json(MANIFEST_FILE, &manifest)
    }
}

/// SHA-256 over the dataset files in a fixed order, each prefixed by its
/// name and length.
pub fn dataset_fingerprint(dir: &Path) -> Result<String> {
    use nodemixup::graphio::{EDGES_FILE, FEATURES_FILE, LABELS_FILE, SPLIT_FILE};
    let mut h = Sha256::new();
    for name in [EDGES_FILE, FEATURES_FILE, LABELS_FILE, SPLIT_FILE] {
        let bytes = fs::read(dir.join(name)).with_context(|| format!("reading {}", dir.join(name).display()))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
