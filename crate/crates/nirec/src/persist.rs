//! Artifact I/O: versioned JSON files with stable field order, plus content
//! hashing for the run manifest. f64 values round-trip bit-exactly through
//! the shortest-representation encoder.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Artifact(format!("{}: encode failed: {e}", path.display())))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&body)
        .map_err(|e| Error::Artifact(format!("{}: decode failed: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Validate an artifact's self-description before trusting its contents.
pub fn expect_format(path: &Path, format: &str, version: u32, got_format: &str, got_version: u32) -> Result<()> {
    if got_format != format || got_version != version {
        return Err(Error::Artifact(format!(
            "{}: expected {format} v{version}, found {got_format} v{got_version}",
            path.display()
        )));
    }
    Ok(())
}

/// Compact number formatting for file names: `10` not `10.0`, `-1.5` -> `m1.5`.
pub fn fname_num(v: f64) -> String {
    let s = if v == v.trunc() && v.abs() < 1e15 { format!("{}", v as i64) } else { format!("{v}") };
    s.replace('-', "m")
}
