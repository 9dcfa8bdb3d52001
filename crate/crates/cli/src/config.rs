//! Layered settings: built-in defaults, then a JSON config file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{de::DeserializeOwned, Serialize};
use serde_json::Value;

use crate::UsageError;

/// Recursively overlay `top` onto `base`; nulls in `top` leave `base` alone.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => {
            if !t.is_null() {
                *b = t;
            }
        }
    }
}

/// Read a config file. A run manifest is accepted too: its `config` entry is
/// used, so any run can be repeated from its manifest.
pub fn read_config_file(path: &Path, command: &str) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut obj) = value else {
        return Err(UsageError(format!("config {} must be a JSON object", path.display())).into());
    };
    if let (Some(Value::String(cmd)), Some(_)) = (obj.get("command"), obj.get("config")) {
        if cmd != command {
            return Err(UsageError(format!("manifest {} belongs to '{cmd}', not '{command}'", path.display())).into());
        }
        return Ok(obj.remove("config").unwrap());
    }
    Ok(Value::Object(obj))
}

/// Resolve the effective configuration of a command.
pub fn resolve<C, F>(command: &str, config_file: Option<&PathBuf>, flags: &F) -> Result<(C, Value)>
where
    C: Default + Serialize + DeserializeOwned,
    F: Serialize,
{
    let mut value = serde_json::to_value(C::default())?;
    if let Some(path) = config_file {
        merge(&mut value, read_config_file(path, command)?);
    }
    merge(&mut value, serde_json::to_value(flags)?);
    let config: C = serde_json::from_value(value.clone()).map_err(|e| UsageError(format!("invalid settings: {e}")))?;
    // Round-trip so the recorded config is exactly what ran.
    let resolved = serde_json::to_value(&config)?;
    Ok((config, resolved))
}
