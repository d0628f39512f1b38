//! JSON / JSONL helpers shared by every file format the workbench reads or
//! writes. Output is deterministic: struct field order is preserved and
//! floats are rounded to 12 significant digits.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl JsonError {
    pub fn is_io(&self) -> bool {
        matches!(self, JsonError::Io { .. })
    }
}

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Round to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(r) = n
                    .as_f64()
                    .map(round_sig)
                    .and_then(serde_json::Number::from_f64)
                {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Canonical value: floats rounded, field order as declared.
pub fn to_canonical_value<T: Serialize>(value: &T) -> Result<Value, JsonError> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    Ok(v)
}

pub fn to_canonical_line<T: Serialize>(value: &T) -> Result<String, JsonError> {
    Ok(serde_json::to_string(&to_canonical_value(value)?)?)
}

pub fn to_canonical_pretty<T: Serialize>(value: &T) -> Result<String, JsonError> {
    let mut s = serde_json::to_string_pretty(&to_canonical_value(value)?)?;
    s.push('\n');
    Ok(s)
}

fn io_err(path: &Path, source: io::Error) -> JsonError {
    JsonError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), JsonError> {
    let mut s = to_canonical_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, JsonError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|source| JsonError::Parse {
        path: path.display().to_string(),
        line: source.line(),
        source,
    })
}

/// Whether a JSONL line is a stream trailer (`{"trailer": ...}`) rather than
/// a record.
pub fn is_trailer(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("{\"trailer\"")
}

/// Read a JSONL stream, skipping blank lines and trailer lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_jsonl(BufReader::new(file), &path.display().to_string())
}

pub fn parse_jsonl<T: DeserializeOwned, R: BufRead>(
    reader: R,
    label: &str,
) -> Result<Vec<T>, JsonError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JsonError::Io {
            path: label.to_string(),
            source,
        })?;
        if line.trim().is_empty() || is_trailer(&line) {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| JsonError::Parse {
            path: label.to_string(),
            line: i + 1,
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T, I>(path: &Path, records: I) -> Result<(), JsonError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = to_canonical_line(r)?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
