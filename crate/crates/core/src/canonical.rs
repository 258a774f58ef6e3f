//! Canonical JSON encoding and content digests.
//!
//! The encoding is the one used for everything that gets hashed: events,
//! projected state, the registry digest and the structured reports.
//!
//! - object keys are sorted by their UTF-8 bytes at every nesting level
//! - arrays keep their order
//! - no insignificant whitespace
//! - only booleans, integers, strings, arrays and objects are encodable;
//!   `null` and non-integer numbers are rejected

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("value is not representable as JSON: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("non-encodable value at {path}: {reason}")]
    NotEncodable { path: String, reason: &'static str },
}

/// Encodes any serializable value as canonical JSON bytes.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let value = serde_json::to_value(value)?;
    value_to_canonical_bytes(&value)
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let bytes = to_canonical_bytes(value)?;
    // Only valid UTF-8 is ever written.
    Ok(String::from_utf8(bytes).expect("canonical JSON is UTF-8"))
}

pub fn value_to_canonical_bytes(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::with_capacity(256);
    write_value(value, &mut out, &mut String::from("$"))?;
    Ok(out)
}

fn write_value(value: &Value, out: &mut Vec<u8>, path: &mut String) -> Result<(), CanonicalError> {
    match value {
        Value::Null => Err(CanonicalError::NotEncodable {
            path: path.clone(),
            reason: "null is not encodable",
        }),
        Value::Bool(b) => {
            out.extend_from_slice(if *b { b"true" } else { b"false" });
            Ok(())
        }
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.extend_from_slice(n.to_string().as_bytes());
                Ok(())
            } else {
                Err(CanonicalError::NotEncodable {
                    path: path.clone(),
                    reason: "only integers are encodable",
                })
            }
        }
        Value::String(s) => {
            // serde_json string escaping: minimal escapes, raw UTF-8 otherwise.
            serde_json::to_writer(&mut *out, s)?;
            Ok(())
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                write_value(item, out, path)?;
                path.truncate(len);
            }
            out.push(b']');
            Ok(())
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                serde_json::to_writer(&mut *out, key)?;
                out.push(b':');
                let len = path.len();
                path.push('.');
                path.push_str(key);
                write_value(item, out, path)?;
                path.truncate(len);
            }
            out.push(b'}');
            Ok(())
        }
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over the canonical encoding of `value`.
pub fn digest<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    Ok(sha256_hex(&to_canonical_bytes(value)?))
}
