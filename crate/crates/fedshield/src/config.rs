//! TOML config files with `key=value` overrides.
//!
//! Precedence, lowest first: built-in defaults, file values, the
//! `FEDSHIELD_SEED` environment variable, `--set` overrides.

use std::path::{Path, PathBuf};

use fedshield_core::config::ConfigError;
use fedshield_core::SimConfig;
use serde::Deserialize;
use toml::{Table, Value};

pub const SEED_ENV: &str = "FEDSHIELD_SEED";

#[derive(Debug, thiserror::Error)]
pub enum ConfigLoadError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("override `{key}`: `{key}` is not a table")]
    NotATable { key: String },
    #[error("{SEED_ENV}={0} is not an unsigned integer")]
    BadEnvSeed(String),
    #[error("invalid config: {0}")]
    Invalid(#[from] ConfigError),
}

/// Loads `path` (or the defaults when `None`), applies `FEDSHIELD_SEED` from
/// the environment and then `overrides`, and validates the result.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<SimConfig, ConfigLoadError> {
    let env_seed = std::env::var(SEED_ENV).ok();
    load_config_with_env(path, overrides, env_seed.as_deref())
}

/// [`load_config`] with the environment seed passed explicitly.
pub fn load_config_with_env(
    path: Option<&Path>,
    overrides: &[String],
    env_seed: Option<&str>,
) -> Result<SimConfig, ConfigLoadError> {
    let (mut table, origin) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigLoadError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            (parse_table(&text, &p.display().to_string())?, p.display().to_string())
        }
        None => (Table::new(), "defaults".to_string()),
    };
    if let Some(raw) = env_seed {
        let seed: u64 = raw.trim().parse().map_err(|_| ConfigLoadError::BadEnvSeed(raw.to_string()))?;
        table.insert("master_seed".into(), Value::Integer(seed as i64));
    }
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg = SimConfig::deserialize(Value::Table(table)).map_err(|e| ConfigLoadError::Parse {
        origin,
        message: e.to_string().trim_end().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a config document from a string.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigLoadError> {
    let table = parse_table(text, "<string>")?;
    let cfg = SimConfig::deserialize(Value::Table(table)).map_err(|e| ConfigLoadError::Parse {
        origin: "<string>".into(),
        message: e.to_string().trim_end().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes a config as a TOML document that [`parse_config`] reads back.
pub fn to_toml_string(cfg: &SimConfig) -> String {
    toml::to_string(cfg).expect("SimConfig always serializes")
}

fn parse_table(text: &str, origin: &str) -> Result<Table, ConfigLoadError> {
    text.parse::<Table>().map_err(|e| ConfigLoadError::Parse {
        origin: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })
}

/// Parses the right-hand side of an override. Anything that is not a valid
/// TOML value is taken as a bare string, so `agent_kind=dqn` works unquoted.
fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies one dotted `key=value` override, creating intermediate tables.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigLoadError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigLoadError::BadOverride(spec.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigLoadError::BadOverride(spec.to_string()));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cursor = table;
    let mut walked = String::new();
    for p in parents {
        if !walked.is_empty() {
            walked.push('.');
        }
        walked.push_str(p);
        let entry = cursor
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = match entry {
            Value::Table(t) => t,
            _ => return Err(ConfigLoadError::NotATable { key: walked }),
        };
    }
    cursor.insert(last.to_string(), parse_value(raw));
    Ok(())
}
