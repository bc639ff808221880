//! Strict extraction of the two-field JSON answer.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MalformedOutput {
    #[error("no JSON object found")]
    NoJson,
    #[error("unexpected keys: {0}")]
    WrongKeys(String),
    #[error("is_dynamic must be \"yes\" or \"no\"")]
    BadFlag,
    #[error("z_min is not a finite number")]
    BadAltitude,
    #[error("z_min {0} is out of range")]
    AltitudeOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseLimits {
    /// Parsed altitudes are clamped to [0, z_max]; values beyond 2 * z_max
    /// in magnitude are rejected.
    pub z_max: f64,
}

impl Default for ParseLimits {
    fn default() -> Self {
        Self { z_max: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsedAnswer {
    pub is_dynamic: bool,
    pub z_min: f64,
}

/// End index (exclusive) of the balanced object starting at `start`, which
/// must be a `{`. Braces inside string literals are ignored.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First balanced `{...}` span that parses as a JSON object.
fn first_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    let bytes = raw.as_bytes();
    let mut from = 0;
    while let Some(off) = raw[from..].find('{') {
        let start = from + off;
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&raw[start..end]) {
                return Some(map);
            }
        }
        from = start + 1;
    }
    None
}

fn altitude(v: &Value) -> Option<f64> {
    let z = match v {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse::<f64>().ok()?,
        _ => return None,
    };
    z.is_finite().then_some(z)
}

pub fn parse_response(raw: &str, limits: &ParseLimits) -> Result<ParsedAnswer, MalformedOutput> {
    let map = first_object(raw).ok_or(MalformedOutput::NoJson)?;
    let mut keys: Vec<&str> = map.keys().map(String::as_str).collect();
    keys.sort_unstable();
    if keys != ["is_dynamic", "z_min"] {
        return Err(MalformedOutput::WrongKeys(keys.join(",")));
    }
    let is_dynamic = match map["is_dynamic"].as_str() {
        Some("yes") => true,
        Some("no") => false,
        _ => return Err(MalformedOutput::BadFlag),
    };
    let z = altitude(&map["z_min"]).ok_or(MalformedOutput::BadAltitude)?;
    if z.abs() > 2.0 * limits.z_max {
        return Err(MalformedOutput::AltitudeOutOfRange(z));
    }
    Ok(ParsedAnswer {
        is_dynamic,
        z_min: z.clamp(0.0, limits.z_max),
    })
}
