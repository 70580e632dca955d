//! `--config` files: a JSON object of flag values keyed by long flag name.
//!
//! Keys at the top level apply to the command being run. An object under a
//! command path such as `"bench response"` applies only to that command and
//! wins over the top level. Flags (and their environment variables) win over
//! both.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const COMMAND_PATHS: [&str; 9] = [
    "gateway serve",
    "gateway user-add",
    "gateway whitelist-add",
    "node spawn",
    "node reset",
    "sim run",
    "bench pnp",
    "bench response",
    "fit-gev",
];

pub fn load(path: &Path) -> Result<Map<String, Value>, String> {
    let text = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    match serde_json::from_slice(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(format!("{}: expected a JSON object", path.display())),
        Err(e) => Err(format!("{}: {e}", path.display())),
    }
}

/// Fills every flag left unset on the command line from `file`.
pub fn apply<T>(cli: T, file: Option<&Map<String, Value>>, command: &str) -> Result<T, String>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Some(file) = file else {
        return Ok(cli);
    };
    let Value::Object(known) = serde_json::to_value(T::default()).expect("flags serialize") else {
        unreachable!("argument structs serialize as objects")
    };

    let mut merged = Map::new();
    for (key, value) in file {
        if COMMAND_PATHS.contains(&key.as_str()) {
            continue;
        }
        merged.insert(key.clone(), value.clone());
    }
    if let Some(section) = file.get(command) {
        let Value::Object(section) = section else {
            return Err(format!("config section `{command}` must be an object"));
        };
        merged.extend(section.clone());
    }
    if let Some(unknown) = merged.keys().find(|k| !known.contains_key(*k)) {
        return Err(format!("config key `{unknown}` is not a flag of `{command}`"));
    }

    let Value::Object(given) = serde_json::to_value(cli).expect("flags serialize") else {
        unreachable!("argument structs serialize as objects")
    };
    for (key, value) in given {
        // an absent switch reads as false and must not hide the file's value
        if !value.is_null() && value != Value::Bool(false) {
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| format!("config: {e}"))
}
