//! Flat `tag = "variant"` tables for externally tagged enums.
//!
//! Serde's internally tagged representation buffers the whole table, which
//! loses field paths in error messages and the unknown-field check on unit
//! variants. Here the tag is lifted out by hand and the remainder is handed
//! to the enum's own externally tagged impl.

use serde::de::{DeserializeOwned, Error as _};
use serde::ser::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use toml::{Table, Value};

pub fn to_flat<T: Serialize>(value: &T, tag: &str) -> Result<Table, String> {
    let ext = Value::try_from(value).map_err(|e| e.to_string())?;
    let (name, body) = match ext {
        Value::String(name) => (name, Table::new()),
        Value::Table(t) if t.len() == 1 => {
            let (name, body) = t.into_iter().next().unwrap();
            match body {
                Value::Table(b) => (name, b),
                _ => return Err(format!("variant `{name}` is not a table")),
            }
        }
        other => return Err(format!("cannot flatten {other}")),
    };
    let mut out = Table::new();
    out.insert(tag.to_string(), Value::String(name));
    out.extend(body);
    Ok(out)
}

pub fn from_flat<T: DeserializeOwned>(mut table: Table, tag: &str) -> Result<T, String> {
    let name = match table.remove(tag) {
        Some(Value::String(s)) => s,
        Some(other) => return Err(format!("`{tag}` must be a string, got {other}")),
        None => return Err(format!("missing field `{tag}`")),
    };
    let body = if table.is_empty() {
        Value::String(name.clone())
    } else {
        Value::Table(table)
    };
    let ext = if let Value::String(_) = body {
        body
    } else {
        let mut t = Table::new();
        t.insert(name.clone(), body);
        Value::Table(t)
    };
    serde_path_to_error::deserialize(ext).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // drop the leading variant segment
        match path.split_once('.') {
            Some((_, field)) => format!("`{field}` ({tag} = \"{name}\"): {inner}"),
            None => format!("{tag} = \"{name}\": {inner}"),
        }
    })
}

fn ser<T: Serialize, S: Serializer>(value: &T, s: S, tag: &str) -> Result<S::Ok, S::Error> {
    to_flat(value, tag).map_err(S::Error::custom)?.serialize(s)
}

fn de<'de, T: DeserializeOwned, D: Deserializer<'de>>(d: D, tag: &str) -> Result<T, D::Error> {
    from_flat(Table::deserialize(d)?, tag).map_err(D::Error::custom)
}

/// For `#[serde(with = "tagged::kind")]`.
pub mod kind {
    use super::*;
    pub fn serialize<T: Serialize, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        ser(v, s, "kind")
    }
    pub fn deserialize<'de, T: DeserializeOwned, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        de(d, "kind")
    }
}

/// For `#[serde(with = "tagged::mode")]`.
pub mod mode {
    use super::*;
    pub fn serialize<T: Serialize, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        ser(v, s, "mode")
    }
    pub fn deserialize<'de, T: DeserializeOwned, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        de(d, "mode")
    }
}
