pub mod data;
pub mod eval;
pub mod model;
pub mod post;
pub mod rhythm;

use std::path::Path;

use anyhow::Result;
use tapgroove::RhythmTrack;

use crate::failure::Failure;

/// Loads an event file, choosing the format by extension.
pub fn read_track(path: &Path) -> Result<RhythmTrack> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("json") => Ok(RhythmTrack::read(path)?),
        _ => Err(Failure::Usage(format!("{}: expected a .csv or .json event file", path.display())).into()),
    }
}

/// Creates the parent directory of an output file.
pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    Ok(())
}
