//! CSV tables with a `#kind:` schema directive and a provenance comment line.
//! Empty cells are missing.

use std::fs;
use std::io::Write;
use std::path::Path;

use copula_stream::{ColumnKind, DataMatrix};

use crate::CliError;

pub const KIND_DIRECTIVE: &str = "#kind:";

pub struct Table {
    pub kinds: Vec<ColumnKind>,
    pub names: Vec<String>,
    pub data: DataMatrix,
}

/// Reads a table. `schema` overrides any `#kind:` directive in the file.
pub fn read_table(path: &Path, schema: Option<&str>) -> Result<Table, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let directive = text
        .lines()
        .find_map(|l| l.trim().strip_prefix(KIND_DIRECTIVE).map(str::to_owned));
    let schema_text = schema.map(str::to_owned).or(directive).ok_or_else(|| {
        CliError::Config(format!(
            "{}: no column schema (pass --schema or add a `{KIND_DIRECTIVE}` line)",
            path.display()
        ))
    })?;
    let kinds = ColumnKind::parse_schema(&schema_text).map_err(|e| CliError::Config(e.to_string()))?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if names.len() != kinds.len() {
        return Err(CliError::Config(format!(
            "{}: schema declares {} columns but the header has {}",
            path.display(),
            kinds.len(),
            names.len()
        )));
    }
    let mut data = DataMatrix::empty(kinds.len());
    let mut row = vec![0.0; kinds.len()];
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            row[j] = if cell.is_empty() {
                f64::NAN
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    CliError::Data(format!(
                        "{} line {line}, column `{}`: cannot parse `{cell}`",
                        path.display(),
                        names[j]
                    ))
                })?;
                if !v.is_nan() && !kinds[j].is_valid_level(v) {
                    return Err(CliError::Data(format!(
                        "{} line {line}, column `{}`: `{cell}` is not a valid {} value",
                        path.display(),
                        names[j],
                        kinds[j]
                    )));
                }
                v
            };
        }
        data.push_row(&row);
    }
    Ok(Table { kinds, names, data })
}

pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes `banner` comment lines, then an optional schema directive, then a
/// CSV header and one line per row.
pub fn write_table(
    path: &Path,
    banner: &str,
    kinds: Option<&[ColumnKind]>,
    names: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut file = fs::File::create(path).map_err(io_err)?;
    writeln!(file, "{banner}").map_err(io_err)?;
    if let Some(k) = kinds {
        writeln!(file, "{KIND_DIRECTIVE} {}", ColumnKind::format_schema(k)).map_err(io_err)?;
    }
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(names).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn matrix_rows(m: &DataMatrix) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..m.nrows()).map(|i| m.row(i).iter().map(|&v| format_cell(v)).collect())
}

/// Writes plain text with the banner prepended.
pub fn write_text(path: &Path, banner: &str, body: &str) -> Result<(), CliError> {
    fs::write(path, format!("{banner}\n{body}"))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
