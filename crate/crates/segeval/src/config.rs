//! TOML configuration files.
//!
//! Every key is optional and named like the corresponding [`EvalConfig`]
//! field; unknown keys are rejected.
//!
//! ```toml
//! click_limit = 6
//! iou_stop = 0.9
//! connectivity = 8
//! point_jitter_mode = "recorded_clicks"
//! ```

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use segeval_core::EvalConfig;

pub fn parse(text: &str) -> Result<EvalConfig> {
    let cfg: EvalConfig = toml::from_str(text)?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<EvalConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn to_toml(cfg: &EvalConfig) -> Result<String> {
    Ok(toml::to_string(cfg)?)
}

/// Hex SHA-256 of the canonical JSON form, stable across key order and
/// formatting of the source file.
pub fn hash(cfg: &EvalConfig) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}
