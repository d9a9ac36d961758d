//! Plot-ready CSV files: a `t` column plus named real columns.
//!
//! The format is deliberately rigid — UTF-8, LF line endings, a header whose
//! first field is `t`, one record per line, `t` strictly increasing — so
//! that every file the tool writes can be read back by this module with a
//! lossless round trip of all reals (values are printed with Rust's
//! shortest-round-trip formatting).

use std::path::Path;

use crate::CliError;

/// One CSV record: a time index and one real per named column.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    /// Time index.
    pub t: i64,
    /// Values aligned with the table's column names.
    pub values: Vec<f64>,
}

/// A parsed CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    /// Column names, excluding the leading `t`.
    pub columns: Vec<String>,
    /// Records in file order; `t` is strictly increasing.
    pub records: Vec<SeriesRecord>,
}

impl CsvTable {
    /// Index of a named column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// All values of a named column, in record order.
    pub fn column_values(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column(name)?;
        Some(self.records.iter().map(|r| r.values[idx]).collect())
    }
}

/// Reads and parses a CSV file.
pub fn read_table(path: &Path) -> Result<CsvTable, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_table(&text).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses CSV text.
pub fn parse_table(text: &str) -> Result<CsvTable, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data("empty file (no header)".into()))?;
    let mut fields = header.split(',');
    let first = fields.next().unwrap_or_default();
    if first != "t" {
        return Err(CliError::Data(format!(
            "header must start with 't', found '{first}'"
        )));
    }
    let columns: Vec<String> = fields.map(str::to_string).collect();
    if columns.iter().any(String::is_empty) {
        return Err(CliError::Data("header has an empty column name".into()));
    }

    let mut records = Vec::new();
    let mut prev_t: Option<i64> = None;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue; // tolerate a trailing newline
        }
        let mut parts = line.split(',');
        let t_raw = parts.next().unwrap_or_default();
        let t: i64 = t_raw.parse().map_err(|_| {
            CliError::Data(format!("line {}: '{t_raw}' is not an integer t", lineno + 2))
        })?;
        if let Some(prev) = prev_t {
            if t <= prev {
                return Err(CliError::Data(format!(
                    "line {}: t must be strictly increasing ({prev} then {t})",
                    lineno + 2
                )));
            }
        }
        prev_t = Some(t);
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    CliError::Data(format!("line {}: '{p}' is not a number", lineno + 2))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != columns.len() {
            return Err(CliError::Data(format!(
                "line {}: expected {} values after t, found {}",
                lineno + 2,
                columns.len(),
                values.len()
            )));
        }
        records.push(SeriesRecord { t, values });
    }
    Ok(CsvTable { columns, records })
}

/// Renders records as CSV text (header, LF endings, shortest-round-trip
/// reals).
pub fn render_table<'a>(
    columns: &[&str],
    records: impl IntoIterator<Item = &'a SeriesRecord>,
) -> String {
    let mut out = String::from("t");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for rec in records {
        debug_assert_eq!(rec.values.len(), columns.len());
        out.push_str(&rec.t.to_string());
        for v in &rec.values {
            out.push(',');
            out.push_str(&format_real(*v));
        }
        out.push('\n');
    }
    out
}

/// Writes records to a CSV file.
pub fn write_table<'a>(
    path: &Path,
    columns: &[&str],
    records: impl IntoIterator<Item = &'a SeriesRecord>,
) -> Result<(), CliError> {
    let text = render_table(columns, records);
    std::fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Shortest decimal string that parses back to exactly the same `f64`.
fn format_real(v: f64) -> String {
    format!("{v}")
}
