//! Output: CSV of the rows, or JSON of the whole report.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format {other:?}, expected csv or json")),
        }
    }
}

pub fn write_csv<W: Write, R: Serialize>(w: W, rows: &[R]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `rows` as CSV or `whole` as pretty JSON to `out`, or stdout.
pub fn emit<T: Serialize, R: Serialize>(format: Format, whole: &T, rows: &[R], out: Option<&Path>) -> Result<()> {
    let mut sink: Box<dyn Write> = match out {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match format {
        Format::Csv => write_csv(&mut sink, rows)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut sink, whole)?;
            sink.write_all(b"\n")?;
        }
    }
    sink.flush()?;
    Ok(())
}
