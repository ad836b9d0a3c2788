//! Deterministic output writers: JSON with floats printed to 17 significant
//! digits, CSV tables and the flat binary eigenvector layout.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// 17 significant digits; non-finite values become null.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

/// snake_case field names become camelCase keys.
pub fn camel(key: &str) -> String {
    let mut out = String::with_capacity(key.len());
    let mut up = false;
    for ch in key.chars() {
        if ch == '_' && !out.is_empty() {
            up = true;
        } else if up {
            out.extend(ch.to_uppercase());
            up = false;
        } else {
            out.push(ch);
        }
    }
    out
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_float(n.as_f64().unwrap()));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // short numeric arrays stay on one line
            if items.iter().all(|x| x.is_number()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, indent, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                let _ = write!(out, "{}{}: ", pad(indent + 1), Value::String(camel(k)));
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// JSON text of any serializable value with the fixed float format.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Output(format!("serialization failed: {e}")))?;
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Output(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        let mut f = fs::File::create(&p).map_err(|e| CliError::Output(format!("cannot write {}: {e}", p.display())))?;
        f.write_all(bytes).map_err(|e| CliError::Output(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, to_json(value)?.as_bytes())
    }
}

/// CSV text; floats use the same 17-digit format as the JSON.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(vec![]);
    let fail = |e: csv::Error| CliError::Output(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Output(format!("csv: {e}")))
}

/// Flat eigenvector file: nx and ny as little-endian u64, then each vector as
/// nx·ny little-endian f64 in row-major order (x fastest).
pub fn eigenvector_bytes(nx: usize, ny: usize, vectors: &[Vec<f64>]) -> Vec<u8> {
    let mut b = Vec::with_capacity(16 + vectors.len() * nx * ny * 8);
    b.extend_from_slice(&(nx as u64).to_le_bytes());
    b.extend_from_slice(&(ny as u64).to_le_bytes());
    for v in vectors {
        for x in v {
            b.extend_from_slice(&x.to_le_bytes());
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Rec {
        x: f64,
        n: usize,
        v: Vec<f64>,
        s: String,
        bad: f64,
        phi_plus: f64,
    }

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(-2.0), "-2.0000000000000000e0");
        let t = to_json(&Rec { x: 1.0 / 3.0, n: 7, v: vec![1.5, 2.0], s: "a\"b".into(), bad: f64::NAN, phi_plus: 0.5 }).unwrap();
        assert!(t.contains("\"x\": 3.3333333333333331e-1"));
        assert!(t.contains("\"n\": 7"));
        assert!(t.contains("[1.5000000000000000e0, 2.0000000000000000e0]"));
        assert!(t.contains("\"s\": \"a\\\"b\""));
        assert!(t.contains("\"bad\": null"));
        assert!(t.contains("\"phiPlus\": 5.0000000000000000e-1"));
        let back: serde_json::Value = serde_json::from_str(&t).unwrap();
        assert_eq!(back["x"].as_f64().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn binary_layout() {
        let b = eigenvector_bytes(2, 3, &[vec![1.0; 6]]);
        assert_eq!(b.len(), 16 + 48);
        assert_eq!(u64::from_le_bytes(b[0..8].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[16..24].try_into().unwrap()), 1.0);
    }
}
