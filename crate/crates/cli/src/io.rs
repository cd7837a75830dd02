//! File handling shared by the subcommands: atomic writes, matrix and
//! numeric-table readers with path-qualified diagnostics, and small CSV
//! writers for the tabular artifacts.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sparsebench::data::ResponseMatrix;
use sparsebench::{Error, Result};

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Writes `bytes` to `path` through a sibling temporary file plus rename, so
/// interrupted runs never leave a truncated artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp_path = path.with_file_name(tmp_name);
    fs::write(&tmp_path, bytes).map_err(|e| io_err(&tmp_path, e))?;
    if let Err(e) = fs::rename(&tmp_path, path) {
        let _ = fs::remove_file(&tmp_path);
        return Err(io_err(path, e));
    }
    Ok(())
}

/// Pretty-printed JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("could not serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_matrix_csv(path: &Path, matrix: &ResponseMatrix) -> Result<()> {
    let mut buf = Vec::new();
    matrix.write_csv(&mut buf)?;
    write_atomic(path, &buf)
}

/// Reads a response matrix, prefixing parse diagnostics with the file path so
/// malformed rows are reported as `<file>: csv row <line>: ...`.
pub fn read_matrix(path: &Path) -> Result<ResponseMatrix> {
    ResponseMatrix::read_csv_path(path).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        Error::InvalidInput(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// A float-valued table read from `subject_id,<column names...>` CSV.
pub struct NumericTable {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    /// Row-major values, one inner vector per subject.
    pub rows: Vec<Vec<f64>>,
}

pub fn read_numeric_table(path: &Path) -> Result<NumericTable> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let at = |msg: String| Error::Parse(format!("{}: {msg}", path.display()));
    let headers = rdr
        .headers()
        .map_err(|e| at(format!("csv header: {e}")))?
        .clone();
    if headers.is_empty() || headers.get(0) != Some("subject_id") {
        return Err(at("csv header must start with 'subject_id'".into()));
    }
    if headers.len() < 2 {
        return Err(at("table needs at least one value column".into()));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut row_ids = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| at(format!("csv row {}: {e}", line + 2)))?;
        if rec.len() != columns.len() + 1 {
            return Err(at(format!(
                "csv row {}: expected {} fields, got {}",
                line + 2,
                columns.len() + 1,
                rec.len()
            )));
        }
        row_ids.push(rec.get(0).unwrap_or_default().to_string());
        let mut row = Vec::with_capacity(columns.len());
        for (col, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                at(format!(
                    "csv row {}, column '{}': cell '{cell}' is not a number",
                    line + 2,
                    columns[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(at(format!(
                    "csv row {}, column '{}': non-finite value",
                    line + 2,
                    columns[col]
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(at("table needs at least 2 rows".into()));
    }
    Ok(NumericTable {
        row_ids,
        columns,
        rows,
    })
}

/// Builds a CSV body from a header and pre-formatted rows.
pub struct CsvWriter {
    buf: String,
}

impl CsvWriter {
    pub fn new(header: &str) -> Self {
        let mut buf = String::with_capacity(4096);
        buf.push_str(header);
        buf.push('\n');
        CsvWriter { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(self, path: &Path) -> Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}

/// Shortest-round-trip decimal formatting; stable across runs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
