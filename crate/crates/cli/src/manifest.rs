//! The run manifest: the single metadata document every command writes.
//!
//! A manifest records the command, the library version, the full run
//! configuration verbatim, and the SHA-256 of every declared output file.
//! `generated_at` is the only timestamped field — every other byte of a
//! report is a pure function of the configuration and inputs, so two runs
//! with the same config differ only there.

use std::path::{Path, PathBuf};

use serde::Serialize;

use downwind_core::numeric::sha256_hex;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// One output file and the hash of its written bytes.
#[derive(Debug, Serialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    outputs: Vec<OutputEntry>,
    /// RFC 3339 UTC wall-clock time; the only field that varies between
    /// identical runs.
    generated_at: String,
}

/// Hash every declared output and write `manifest.json` beside them.
///
/// Reading an output back before hashing doubles as the existence check:
/// the manifest (and the success exit) appears only if every declared file
/// is actually on disk.
pub fn write_manifest(command: &str, cfg: &RunConfig, outputs: &[PathBuf]) -> Result<PathBuf> {
    let out_dir = cfg.out_dir();
    let entries = outputs
        .iter()
        .map(|path| {
            let bytes = std::fs::read(path).map_err(|e| CliError::read(path, e))?;
            Ok(OutputEntry {
                path: relative_name(path, &out_dir),
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        command,
        version: downwind_core::VERSION,
        config: cfg,
        outputs: entries,
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    body.push('\n');
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, body).map_err(|e| CliError::write(&path, e))?;
    Ok(path)
}

fn relative_name(path: &Path, out_dir: &Path) -> String {
    path.strip_prefix(out_dir)
        .unwrap_or(path)
        .display()
        .to_string()
}
