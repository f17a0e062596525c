//! Matrix files: plain CSV (one row per line) and raw little-endian `f64`
//! with a 16-byte header holding `rows` and `cols` as `u64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedMatrix {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Matrix<f64>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                malformed(path, format!("line {}: `{}` is not a number", lineno + 1, field.trim()))
            })?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(malformed(
                    path,
                    format!("line {} has {width} values, expected {c}", lineno + 1),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| malformed(path, "no rows"))?;
    Matrix::from_vec(rows, cols, data)
}

pub fn read_csv(path: &Path) -> Result<Matrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_csv(&text, path)
}

pub fn to_csv(m: &Matrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, m: &Matrix<f64>) -> Result<()> {
    fs::write(path, to_csv(m)).map_err(|e| io_err(path, e))
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<Matrix<f64>> {
    if bytes.len() < 16 {
        return Err(malformed(path, format!("{} bytes, header needs 16", bytes.len())));
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| malformed(path, format!("header {rows}x{cols} overflows")))?;
    let body = &bytes[16..];
    if body.len() as u64 != expected {
        return Err(malformed(
            path,
            format!("header says {rows}x{cols} ({expected} bytes), body has {}", body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_vec(rows as usize, cols as usize, data)
}

pub fn encode_binary(m: &Matrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.as_slice().len());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_binary(path: &Path) -> Result<Matrix<f64>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_binary(&bytes, path)
}

pub fn write_binary(path: &Path, m: &Matrix<f64>) -> Result<()> {
    fs::write(path, encode_binary(m)).map_err(|e| io_err(path, e))
}

/// Reads a matrix, choosing the format by extension (`.csv` or anything else
/// as binary).
pub fn read_matrix(path: &Path) -> Result<Matrix<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_csv(path),
        _ => read_binary(path),
    }
}
