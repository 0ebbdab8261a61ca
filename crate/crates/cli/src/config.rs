//! JSON config loading with dotted-path overrides.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub fn read_config_value(path: Option<&Path>) -> CliResult<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Map::new()));
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(CliError::validation(format!("config {}: top level must be an object", path.display())));
    }
    Ok(v)
}

/// Parse `KEY=VALUE`; the value is JSON when it parses as JSON, else a string.
pub fn parse_override(s: &str) -> CliResult<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("override {s:?} is not KEY=VALUE")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::validation(format!("override {s:?} has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

pub fn apply_override(root: &mut Value, key: &str, value: Value) -> CliResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::validation(format!("cannot set {key}: {} is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Map serde's unknown-field message onto a short one naming the key.
fn describe(err: serde_json::Error) -> CliError {
    let msg = err.to_string();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return CliError::validation(format!("unknown key: {}", &rest[..end]));
        }
    }
    if let Some(start) = msg.find("unknown field `") {
        let rest = &msg[start + "unknown field `".len()..];
        if let Some(end) = rest.find('`') {
            return CliError::validation(format!("unknown key: {}", &rest[..end]));
        }
    }
    CliError::validation(format!("invalid config: {msg}"))
}

pub fn resolve<T: DeserializeOwned>(value: Value, overrides: &[String], seed: Option<u64>) -> CliResult<T> {
    parse(resolve_value(value, overrides, seed)?)
}

/// Apply overrides and the seed, then check the schema version.
pub fn resolve_value(mut value: Value, overrides: &[String], seed: Option<u64>) -> CliResult<Value> {
    for o in overrides {
        let (k, v) = parse_override(o)?;
        apply_override(&mut value, &k, v)?;
    }
    if let Some(seed) = seed {
        apply_override(&mut value, "seed", Value::from(seed))?;
    }
    if let Some(v) = value.get("schema_version") {
        if v.as_u64() != Some(SCHEMA_VERSION as u64) {
            return Err(CliError::validation(format!(
                "unsupported schema_version {v}; expected {SCHEMA_VERSION}"
            )));
        }
    }
    Ok(value)
}

pub fn parse<T: DeserializeOwned>(value: Value) -> CliResult<T> {
    serde_json::from_value(value).map_err(describe)
}

pub fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}
