//! Run manifests: the seed, the fully resolved config, and one line per
//! artifact with its byte size and SHA-256 digest. Artifacts are listed in
//! sorted order and nothing time-dependent is written, so identical runs
//! produce identical manifests.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Write `manifest.txt` inside `out_dir`, covering the given files
/// (paths relative to `out_dir`).
pub fn write_manifest(
    out_dir: &Path,
    seed: u64,
    config_lines: &[(String, String)],
    files: &[PathBuf],
) -> Result<()> {
    let mut entries = Vec::with_capacity(files.len());
    for rel in files {
        let full = out_dir.join(rel);
        let bytes = std::fs::read(&full).map_err(CliError::io(&full))?;
        entries.push((rel.display().to_string(), bytes.len(), sha256_hex(&bytes)));
    }
    entries.sort();
    let mut text = String::new();
    text.push_str("# mstk run manifest\n");
    text.push_str(&format!("seed = {seed}\n"));
    for (key, value) in config_lines {
        text.push_str(&format!("config.{key} = {value}\n"));
    }
    text.push('\n');
    text.push_str("# sha256  bytes  path\n");
    for (path, size, hash) in entries {
        text.push_str(&format!("{hash}  {size}  {path}\n"));
    }
    let manifest_path = out_dir.join(MANIFEST_NAME);
    std::fs::write(&manifest_path, text).map_err(CliError::io(&manifest_path))
}

/// Create a fresh output directory; refuses to touch an existing one.
pub fn prepare_out_dir(path: &Path) -> Result<()> {
    if path.exists() {
        return Err(CliError::Config(format!(
            "output directory {} already exists; refusing to overwrite",
            path.display()
        )));
    }
    std::fs::create_dir_all(path).map_err(CliError::io(path))
}
