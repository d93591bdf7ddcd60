//! Number formatting, run headers, CSV tables and atomic file output.

use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Seventeen significant digits in exponent form, independent of locale;
/// enough to round-trip every `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

/// Shortest exponent form that round-trips, for header tokens.
pub fn fmt_token(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else {
        fmt_num(x)
    }
}

/// JSON number, or a string for the non-finite values JSON cannot hold.
pub fn json_num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else {
        Value::from(fmt_num(x))
    }
}

pub fn json_opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, json_num)
}

/// Ordered `key=value` pairs echoed at the top of every output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

fn escape_token(value: &str) -> String {
    value.replace('%', "%25").replace(' ', "%20").replace('\n', "%0A")
}

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.entries.push((key.into(), value.into()));
        self
    }

    pub fn push_num(&mut self, key: &str, value: f64) -> &mut Self {
        self.push(key, fmt_token(value))
    }

    pub fn extend(&mut self, other: &Header) -> &mut Self {
        self.entries.extend(other.entries.iter().cloned());
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// `key=value` tokens separated by single spaces; spaces and `%` inside
    /// values are percent-encoded.
    pub fn tokens(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={}", escape_token(v)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_json(&self) -> Value {
        let map = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), Value::from(v.clone())))
            .collect::<serde_json::Map<_, _>>();
        Value::Object(map)
    }
}

/// Rectangular table of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn csv_cell(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> CliResult<()> {
        if row.len() != self.columns.len() {
            return Err(CliError::Numerical(format!(
                "row with {} cells for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    /// CSV with the run header as a `#` line, then the column names, then
    /// one line per row.
    pub fn to_csv(&self, header: &Header) -> String {
        let mut out = String::new();
        out.push_str("# ");
        out.push_str(&header.tokens());
        out.push('\n');
        let line = |cells: &[String]| cells.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(",");
        out.push_str(&line(&self.columns));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::input(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

/// Writes a table as CSV to `path`.
pub fn emit_table(table: &Table, header: &Header, path: &Path) -> CliResult<()> {
    write_atomic(path, table.to_csv(header).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_with_seventeen_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
        assert_eq!(fmt_num(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_token(1e-4), "1e-4");
    }

    #[test]
    fn csv_layout() {
        let mut header = Header::new();
        header.push("command", "demo").push("path", "a b%c");
        let mut t = Table::new(&["x", "note"]);
        assert_eq!(t.to_csv(&header), "# command=demo path=a%20b%25c\nx,note\n");
        t.push(vec!["1".into(), "a,\"b\"".into()]).unwrap();
        assert_eq!(t.to_csv(&header).lines().nth(2).unwrap(), "1,\"a,\"\"b\"\"\"");
        assert!(t.push(vec!["1".into()]).is_err());
    }

    #[test]
    fn atomic_write_replaces_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/out.csv"), b"x").is_err());
    }
}
