//! Index file layout:
//!
//! ```text
//! plagdet-index <format_version> sha256:<hex digest of the payload bytes>\n
//! <payload: compact JSON of the index>
//! ```
//!
//! The version is checked before the checksum so that files written by a
//! newer build fail with a version error rather than a checksum error.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{SegmentIndex, INDEX_FORMAT_VERSION};
use crate::error::IndexError;

const MAGIC: &str = "plagdet-index";

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn index_to_bytes(index: &SegmentIndex) -> Vec<u8> {
    let payload = serde_json::to_vec(index).expect("index serialization is infallible");
    let mut out = format!("{MAGIC} {} sha256:{}\n", index.format_version, hex_digest(&payload)).into_bytes();
    out.extend_from_slice(&payload);
    out
}

pub fn index_from_bytes(bytes: &[u8]) -> Result<SegmentIndex, IndexError> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| IndexError::Corrupt("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| IndexError::Corrupt("header is not UTF-8".into()))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(IndexError::Corrupt("not a plagdet index file".into()));
    }
    let found: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| IndexError::Corrupt("unreadable format version".into()))?;
    if found != INDEX_FORMAT_VERSION {
        return Err(IndexError::Version { found, expected: INDEX_FORMAT_VERSION });
    }
    let expected = parts
        .next()
        .and_then(|c| c.strip_prefix("sha256:"))
        .ok_or_else(|| IndexError::Corrupt("missing checksum".into()))?;
    let payload = &bytes[newline + 1..];
    let actual = hex_digest(payload);
    if actual != expected {
        return Err(IndexError::Checksum { expected: expected.to_string(), actual });
    }
    let index: SegmentIndex = serde_json::from_slice(payload).map_err(|e| IndexError::Corrupt(e.to_string()))?;
    if index.format_version != found {
        return Err(IndexError::Corrupt(format!(
            "header version {found} disagrees with payload version {}",
            index.format_version
        )));
    }
    Ok(index)
}

pub fn save_index(index: &SegmentIndex, path: &Path) -> Result<(), IndexError> {
    std::fs::write(path, index_to_bytes(index)).map_err(|source| IndexError::Io { path: path.display().to_string(), source })
}

pub fn load_index(path: &Path) -> Result<SegmentIndex, IndexError> {
    let bytes = std::fs::read(path).map_err(|source| IndexError::Io { path: path.display().to_string(), source })?;
    index_from_bytes(&bytes)
}
