use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

/// Everything needed to rerun a command: its resolved configuration, seed and file paths.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub duration_sec: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

pub struct Run {
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    pub fn start(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                threads: 1,
                config: serde_json::to_value(config)?,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                duration_sec: 0.0,
                details: None,
            },
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.manifest.inputs.insert(name.to_string(), path.to_path_buf());
    }

    pub fn output(&mut self, name: &str, path: &Path) {
        self.manifest.outputs.insert(name.to_string(), path.to_path_buf());
    }

    pub fn details(&mut self, value: serde_json::Value) {
        self.manifest.details = Some(value);
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.manifest.duration_sec = self.started.elapsed().as_secs_f64();
        write_atomic(path, &serde_json::to_vec_pretty(&self.manifest)?)
    }
}

/// Writes to a hidden sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .with_context(|| format!("{} has no file name", path.display()))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))
}

/// `events.csv` → `events.<suffix>`
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// `out/events.csv` → `out/events.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.manifest.json"))
}
