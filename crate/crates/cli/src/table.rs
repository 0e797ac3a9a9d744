//! CSV input and output.

use std::fs::File;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// A numeric table with its header.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Reads a CSV file with a header row in which every field is a number.
pub fn read_numeric_csv(path: &Path) -> CliResult<Table> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::Input(format!("{}: row {}, column {}: not a finite number: {field:?}", path.display(), i + 1, j + 1))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(CliError::Input(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Writes `header` and `rows` as CSV; numbers use the shortest round-trip form.
pub fn write_csv<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    writer.write_record(header).map_err(io)?;
    for row in rows {
        writer.write_record(row.as_ref()).map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
