//! Generic matrix files: a small binary format and a CSV fallback.
//!
//! Binary layout ("NICEMAT1"): 8-byte magic, u32 little-endian row count, u32
//! little-endian column count, then `rows * cols` little-endian f64 values in
//! row-major order. CSV files are plain comma-separated decimal floats, one
//! row per line, no header; values are written in shortest round-trip form so
//! a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MATRIX_MAGIC: &[u8; 8] = b"NICEMAT1";

pub fn save_matrix(path: &Path, t: &Tensor) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + t.data().len() * 8);
    bytes.extend_from_slice(MATRIX_MAGIC);
    bytes.extend_from_slice(&(t.rows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    parse_matrix(&bytes)
}

pub(crate) fn parse_matrix(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 16 {
        return Err(Error::format(0, "file shorter than the 16-byte header"));
    }
    if &bytes[..8] != MATRIX_MAGIC {
        return Err(Error::format(0, "bad magic, expected NICEMAT1"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let want = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(8, "matrix size overflows"))?;
    if bytes.len() - 16 != want {
        return Err(Error::format(
            16,
            format!(
                "payload is {} bytes but {rows}x{cols} needs {want}",
                bytes.len() - 16
            ),
        ));
    }
    let data: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(rows, cols, data)
}

pub fn save_matrix_csv(path: &Path, t: &Tensor) -> Result<()> {
    let mut out = String::new();
    for r in 0..t.rows() {
        let row = t.row(r);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_matrix_csv(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    let mut offset = 0u64;
    for line in text.lines() {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let mut count = 0usize;
            for field in trimmed.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::format(offset, format!("cannot parse '{}' as a number", field.trim()))
                })?;
                data.push(v);
                count += 1;
            }
            match cols {
                None => cols = Some(count),
                Some(c) if c != count => {
                    return Err(Error::format(
                        offset,
                        format!("row {rows} has {count} fields, expected {c}"),
                    ));
                }
                _ => {}
            }
            rows += 1;
        }
        offset += line.len() as u64 + 1;
    }
    if rows == 0 {
        return Err(Error::format(0, "empty CSV file"));
    }
    Tensor::new(rows, cols.unwrap(), data)
}

/// Load a matrix, dispatching on the `.csv` extension or the binary magic.
pub fn load_matrix_auto(path: &Path) -> Result<Tensor> {
    if path.extension().is_some_and(|e| e == "csv") {
        load_matrix_csv(path)
    } else {
        load_matrix(path)
    }
}
