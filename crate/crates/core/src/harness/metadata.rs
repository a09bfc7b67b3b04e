//! Plain-text `key = value` files, used both for run metadata and for the
//! problem files read by `sivi solve --config`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Vector};

use super::csv::{format_real, parse_real};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value but keeping its position.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_real(&mut self, key: &str, v: f64) {
        self.set(key, format_real(v));
    }

    pub fn set_vector(&mut self, key: &str, v: &Vector) {
        self.set(key, v.iter().map(|&x| format_real(x)).collect::<Vec<_>>().join(","));
    }

    /// Row-major, rows separated by `;`.
    pub fn set_matrix(&mut self, key: &str, m: &Matrix) {
        let rows: Vec<String> = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .map(|j| format_real(m[(i, j)]))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        self.set(key, rows.join(";"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("key `{key}`: cannot parse `{raw}`")))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        if self.contains(key) {
            self.parse(key)
        } else {
            Ok(default)
        }
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        parse_real(self.require(key)?)
    }

    pub fn vector(&self, key: &str) -> Result<Vector> {
        parse_vector(self.require(key)?)
            .map_err(|e| Error::Parse(format!("key `{key}`: {e}")))
    }

    pub fn matrix(&self, key: &str) -> Result<Matrix> {
        let raw = self.require(key)?;
        let rows: Vec<Vector> = if raw.trim().is_empty() {
            Vec::new()
        } else {
            raw.split(';').map(parse_vector).collect::<Result<_>>()?
        };
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Parse(format!("key `{key}`: ragged matrix rows")));
        }
        Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = Self::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", idx + 1)))?;
            kv.set(k.trim(), v.trim());
        }
        Ok(kv)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn parse_vector(raw: &str) -> Result<Vector> {
    if raw.trim().is_empty() {
        return Ok(Vector::zeros(0));
    }
    let values: Vec<f64> = raw.split(',').map(parse_real).collect::<Result<_>>()?;
    Ok(Vector::from_vec(values))
}
