//! Logit ingestion: the LGT1 binary format and JSON lines.
//!
//! LGT1 is a 14-byte little-endian header, `b"LGT1"`, `u16` version (1),
//! `u32` vector count, `u32` vector length, followed by `count * n` `f32`
//! values, vector after vector.

use std::io::Write;
use std::path::Path;

use polyargmax::LogitVector;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"LGT1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 14;

fn check_shape(vectors: &[LogitVector]) -> Result<usize> {
    let n = vectors.first().map_or(0, LogitVector::len);
    if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != n) {
        return Err(CliError::BadSpec(format!(
            "LGT1 needs equal lengths: vector 0 has {n}, vector {i} has {}",
            v.len()
        )));
    }
    Ok(n)
}

/// Writes LGT1. Values are stored as `f32`.
pub fn write_lgt1<W: Write>(mut w: W, vectors: &[LogitVector]) -> Result<()> {
    let n = check_shape(vectors)?;
    let too_big = |what: &str| CliError::BadSpec(format!("{what} does not fit in u32"));
    let count = u32::try_from(vectors.len()).map_err(|_| too_big("count"))?;
    let n = u32::try_from(n).map_err(|_| too_big("n"))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + vectors.len() * n as usize * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&n.to_le_bytes());
    for v in vectors {
        for &x in v.values() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_lgt1(bytes: &[u8]) -> Result<Vec<LogitVector>> {
    if bytes.len() < HEADER_LEN {
        return Err(CliError::format(
            bytes.len() as u64,
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(CliError::format(0, "bad magic, expected LGT1"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(CliError::format(4, format!("unsupported version {version}")));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (count, n) = (word(6), word(10));
    if n < 2 && count > 0 {
        return Err(CliError::format(10, format!("vector length {n} is below 2")));
    }
    let expected = count
        .checked_mul(n)
        .and_then(|k| k.checked_mul(4))
        .ok_or_else(|| CliError::format(6, "payload size overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(CliError::format(
            bytes.len() as u64,
            format!("truncated payload: expected {expected} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(CliError::format(
            (HEADER_LEN + expected) as u64,
            format!("{} trailing bytes after payload", payload.len() - expected),
        ));
    }
    payload
        .chunks_exact(4 * n.max(1))
        .take(count)
        .enumerate()
        .map(|(index, chunk)| {
            let values: Vec<f64> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            to_vector(index, values)
        })
        .collect()
}

fn to_vector(index: usize, values: Vec<f64>) -> Result<LogitVector> {
    if let Some(position) = values.iter().position(|v| !v.is_finite()) {
        return Err(CliError::NonFinite { index, position });
    }
    Ok(LogitVector::new(values)?)
}

/// One JSON array of numbers per line; blank lines are skipped.
pub fn read_jsonl(text: &str) -> Result<Vec<LogitVector>> {
    let mut out = Vec::new();
    let mut start = 0usize;
    for line in text.split_inclusive('\n') {
        let offset = start as u64;
        start += line.len();
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = serde_json::from_str(line)
            .map_err(|e| CliError::format(offset + e.column().saturating_sub(1) as u64, e.to_string()))?;
        if values.len() < 2 {
            return Err(CliError::format(offset, format!("vector has {} entries, need at least 2", values.len())));
        }
        out.push(to_vector(out.len(), values)?);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut w: W, vectors: &[LogitVector]) -> Result<()> {
    for v in vectors {
        serde_json::to_writer(&mut w, v.values())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses either format, told apart by the LGT1 magic.
pub fn parse(bytes: &[u8]) -> Result<Vec<LogitVector>> {
    if bytes.starts_with(MAGIC) {
        return read_lgt1(bytes);
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|e| CliError::format(e.valid_up_to() as u64, "neither LGT1 nor UTF-8 JSON lines"))?;
    match text.find(|c: char| !c.is_whitespace()) {
        None => Ok(Vec::new()),
        Some(i) if text[i..].starts_with('[') => read_jsonl(text),
        Some(i) => Err(CliError::format(i as u64, "neither LGT1 nor JSON lines")),
    }
}

pub fn ingest(path: &Path) -> Result<Vec<LogitVector>> {
    parse(&std::fs::read(path)?)
}

/// Writes JSON lines for a `.jsonl` or `.json` path, LGT1 otherwise.
pub fn write_path(path: &Path, vectors: &[LogitVector]) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "json") => write_jsonl(file, vectors),
        _ => write_lgt1(file, vectors),
    }
}
