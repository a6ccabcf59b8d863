//! Plain-text output formats: CSV grids and tables, JSON documents.
//!
//! A grid file starts with `# key=value` metadata lines (always including
//! `width` and `height`), followed by `height` rows of `width` comma-separated
//! values. Floats use Rust's shortest round-trip formatting, so a written grid
//! reads back bit-identically. Files are UTF-8 with LF line endings.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => format_err(path, format!("{other:?}")),
    }
}

/// A row-major 2-D array with its metadata header.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub metadata: BTreeMap<String, String>,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        (x < self.width && y < self.height).then(|| self.values[y * self.width + x])
    }
}

/// Writes `values` (row-major, `width × height`) as a CSV grid.
pub fn write_grid<T: Display>(
    path: &Path,
    width: usize,
    height: usize,
    metadata: &[(&str, String)],
    values: &[T],
) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::domain(format!(
            "grid has {} values, expected {width}x{height}",
            values.len()
        )));
    }
    let mut out = String::new();
    out.push_str(&format!("# width={width}\n# height={height}\n"));
    for (k, v) in metadata {
        out.push_str(&format!("# {k}={v}\n"));
    }
    for row in values.chunks(width.max(1)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a grid written by [`write_grid`].
pub fn read_grid(path: &Path) -> Result<Grid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut metadata = BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some((k, v)) = body.split_once('=') {
            metadata.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let dim = |key: &str| -> Result<usize> {
        metadata
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format_err(path, format!("missing or invalid `{key}` header")))
    };
    let (width, height) = (dim("width")?, dim("height")?);

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut values = Vec::with_capacity(width * height);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != width {
            return Err(format_err(path, format!("row {rows} has {} values, expected {width}", record.len())));
        }
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_err(path, format!("not a number: `{field}`")))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows != height {
        return Err(format_err(path, format!("found {rows} rows, expected {height}")));
    }
    Ok(Grid {
        width,
        height,
        metadata,
        values,
    })
}

/// Writes a CSV table with a header row. Metadata lines go first as comments.
pub fn write_table<T: Display>(path: &Path, metadata: &[(&str, String)], header: &[&str], rows: &[Vec<T>]) -> Result<()> {
    let mut buf = Vec::new();
    for (k, v) in metadata {
        buf.extend_from_slice(format!("# {k}={v}\n").as_bytes());
    }
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        w.write_record(header).map_err(|e| csv_err(path, e))?;
        for row in rows {
            if row.len() != header.len() {
                return Err(Error::domain("table row length does not match header"));
            }
            w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a table written by [`write_table`]: header names and numeric rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| format_err(path, format!("not a number: `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(format!("cannot serialize JSON: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
