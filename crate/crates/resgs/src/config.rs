//! Run configuration files (TOML) and `key=value` overrides.
//!
//! A file is merged over a preset. The optional top-level `preset` key picks
//! `resgs` (default) or `baseline`; `iterations` scales the preset's
//! densification stop and evaluation interval. Every other key mirrors
//! [`TrainConfig`], for example:
//!
//! ```toml
//! preset = "resgs"
//! iterations = 3000
//! seed = 1
//!
//! [densify]
//! tau = 0.0016
//! densify_start = 100
//!
//! [stages]
//! levels = 3
//! substages = 3
//! boundaries = { fractions = [0.0833, 0.2, 1.0] }
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use resgs_core::trainer::TrainConfig;

use crate::error::{Error, Result};

const DEFAULT_ITERATIONS: usize = 30_000;

/// Set `dotted.key` in `table` to the TOML literal `value`, or to the plain
/// string when it does not parse.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Usage(format!("bad override key `{key}`")));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Usage(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Build a configuration from TOML text plus overrides.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<TrainConfig> {
    let mut user: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Usage(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut user, o)?;
    }
    let preset = match user.remove("preset") {
        None => "resgs".to_string(),
        Some(Value::String(s)) => s,
        Some(other) => {
            return Err(Error::Usage(format!(
                "config: preset must be a string, got {other}"
            )))
        }
    };
    let iterations = match user.get("iterations") {
        None => DEFAULT_ITERATIONS,
        Some(Value::Integer(n)) if *n > 0 => *n as usize,
        Some(other) => {
            return Err(Error::Usage(format!(
                "config: iterations must be a positive integer, got {other}"
            )))
        }
    };
    let base = match preset.as_str() {
        "resgs" => TrainConfig::resgs(iterations),
        "baseline" => TrainConfig::baseline(iterations),
        other => return Err(Error::Usage(format!("config: unknown preset `{other}`"))),
    };
    let mut table = Table::try_from(&base).map_err(|e| Error::Usage(format!("config: {e}")))?;
    merge(&mut table, user);
    let cfg: TrainConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Usage(format!("config: {e}")))?;
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Read `path` (or start from an empty file) and apply `overrides`.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

/// The configuration as TOML, every field spelled out.
pub fn to_toml(cfg: &TrainConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}

/// First 16 hex digits of the SHA-256 of the canonical JSON form.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("configuration serializes");
    let digest = Sha256::digest(&json);
    hex::encode(&digest[..8])
}
