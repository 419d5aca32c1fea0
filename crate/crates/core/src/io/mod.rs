//! File formats: binary maps, PGM masks, key=value config and scene
//! bundles.

mod bundle;
mod config;
mod maps;

pub use bundle::{ContactFile, SceneBundle};
pub use config::{Config, ScoreConfig};
pub use maps::{
    decode_feature_map, decode_map, decode_pgm, encode_feature_map, encode_map, encode_pgm, read_depth, read_feature_map,
    read_mask, write_depth, write_feature_map, write_pgm, write_silhouette, MapKind, FORMAT_VERSION,
};

use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl IoError {
    pub fn format(msg: impl Into<String>) -> Self {
        IoError::Format(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        IoError::Invalid(msg.into())
    }

    /// True when the file could not be found or opened, as opposed to
    /// failing to parse.
    pub fn is_missing(&self) -> bool {
        matches!(self, IoError::Io { .. })
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, IoError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| IoError::format(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(IoError::format(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}
