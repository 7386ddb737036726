//! Artifact formats: the `PFNAVMAT` matrix container, CSV matrices and
//! `key=value` sidecars.
//!
//! Container layout: the 8 magic bytes `PFNAVMAT`, `rows` and `cols` as
//! little-endian `u64`, then `rows·cols` little-endian `f64` in row-major order.

use crate::numfmt::sig15;
use crate::{Error, Result};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

pub const MAGIC: &[u8; 8] = b"PFNAVMAT";

pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> std::result::Result<DMatrix<f64>, String> {
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err("not a PFNAVMAT container".into());
    }
    let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(24));
    if expected != Some(bytes.len()) {
        return Err(format!(
            "size {} does not match a {rows}x{cols} matrix",
            bytes.len()
        ));
    }
    let data = &bytes[24..];
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let k = 8 * (i * cols + j);
        f64::from_le_bytes(data[k..k + 8].try_into().expect("8 bytes"))
    }))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes).map_err(|msg| Error::Format {
        path: path.into(),
        msg,
    })
}

/// Headerless CSV, 15 significant digits.
pub fn write_csv_matrix(path: &Path, m: &DMatrix<f64>, header: Option<&[&str]>) -> Result<()> {
    let mut s = String::new();
    if let Some(h) = header {
        s.push_str(&h.join(","));
        s.push('\n');
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| sig15(m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_csv_matrix(path: &Path, has_header: bool) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fmt = |msg: String| Error::Format {
        path: path.into(),
        msg,
    };
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(usize::from(has_header))
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(k, l)| {
            l.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| fmt(format!("line {}: {e}", k + 1)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(fmt("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Ordered `key=value` metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sidecar {
    entries: BTreeMap<String, String>,
}

impl Sidecar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    /// Stores a list as space-separated values.
    pub fn set_list<T: Display>(&mut self, key: &str, values: &[T]) -> &mut Self {
        let s: Vec<String> = values.iter().map(ToString::to_string).collect();
        self.set(key, s.join(" "))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> std::result::Result<T, String>
    where
        T::Err: Display,
    {
        let v = self
            .raw(key)
            .ok_or_else(|| format!("missing key `{key}`"))?;
        v.parse().map_err(|e| format!("key `{key}`: {e}"))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> std::result::Result<Vec<T>, String>
    where
        T::Err: Display,
    {
        let v = self
            .raw(key)
            .ok_or_else(|| format!("missing key `{key}`"))?;
        v.split_whitespace()
            .map(|s| s.parse().map_err(|e| format!("key `{key}`: {e}")))
            .collect()
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Sidecar { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Sidecar::parse(&text).map_err(|msg| Error::Format {
            path: path.into(),
            msg,
        })
    }

    /// Typed lookup that reports the file on failure.
    pub fn req<T: FromStr>(&self, path: &Path, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key).map_err(|msg| Error::Format {
            path: path.into(),
            msg,
        })
    }

    pub fn req_list<T: FromStr>(&self, path: &Path, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        self.get_list(key).map_err(|msg| Error::Format {
            path: path.into(),
            msg,
        })
    }
}
