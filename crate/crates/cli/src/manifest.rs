//! Run manifest: one record per subcommand invocation, listing every file
//! written with its content hash. Numeric outputs are deterministic under a
//! fixed seed; the manifest itself carries timestamps and is the one file
//! excluded from byte-level comparisons.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subcommand: String,
    pub config: String,
    pub seed: u64,
    pub out_dir: String,
    pub started_at: String,
    pub finished_at: String,
    pub files: Vec<FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Append one invocation record to `manifest.json` in the run directory.
pub fn append(out_dir: &Path, entry: ManifestEntry) -> Result<()> {
    let path = out_dir.join(MANIFEST_NAME);
    let mut entries: Vec<ManifestEntry> = if path.exists() {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        Vec::new()
    };
    entries.push(entry);
    let text = serde_json::to_string_pretty(&entries)?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
