//! Result emission: float formatting, JSON files, and the metadata
//! sidecar binding every output to the exact config that produced it.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

/// 17 significant digits — enough to reconstruct the exact f64. Masked
/// values arrive as `inf`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Metadata sidecar: artifact version, a hash binding results to the
/// effective config, the wall-clock time (the one field reproducibility
/// excludes), and the config itself.
#[derive(Serialize)]
struct Meta<'a> {
    version: &'a str,
    config_hash: String,
    timestamp_unix: u64,
    config: &'a ExperimentConfig,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn write_meta(out: &Path, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let timestamp_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = Meta {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(cfg),
        timestamp_unix,
        config: cfg,
    };
    write_json(&out.join("meta.json"), &meta)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?;
    body.push('\n');
    fs::write(path, body).map_err(CliError::Io)
}

pub fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(CliError::Io)
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::Io)
}
