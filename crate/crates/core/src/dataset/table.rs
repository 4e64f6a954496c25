use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::schema::DatasetSchema;
use crate::error::{Error, Result};

/// One parsed CSV cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Missing,
    Number(f64),
    Text(String),
}

impl Cell {
    /// Parses a trimmed field; fields listed in `missing` become [`Cell::Missing`].
    pub fn parse(field: &str, missing: &[String]) -> Cell {
        let field = field.trim();
        if missing.iter().any(|m| m == field) {
            return Cell::Missing;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Number(v),
            _ => Cell::Text(field.to_string()),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Missing => write!(f, "<missing>"),
            Cell::Number(v) => write!(f, "{v}"),
            Cell::Text(s) => write!(f, "{s}"),
        }
    }
}

/// Header plus rows of parsed cells. Every row has one cell per column.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl RawTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dataset("table has no data rows".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Cell {
                    row: i + 1,
                    column: columns.get(row.len()).cloned().unwrap_or_default(),
                    message: format!("expected {} cells, found {}", columns.len(), row.len()),
                });
            }
        }
        Ok(Self { columns, rows })
    }

    /// Reads RFC-4180 CSV with a header row.
    pub fn from_reader<R: Read>(reader: R, missing: &[String], origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let columns: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(origin, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(origin, e))?;
            if record.len() == 1 && record.get(0).is_some_and(|f| f.trim().is_empty()) {
                continue;
            }
            if record.len() != columns.len() {
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                return Err(Error::Csv {
                    path: origin.to_path_buf(),
                    line,
                    message: format!(
                        "ragged row: expected {} fields, found {} (first mismatched column {})",
                        columns.len(),
                        record.len(),
                        record.len().min(columns.len()) + 1
                    ),
                });
            }
            rows.push(record.iter().map(|f| Cell::parse(f, missing)).collect());
        }
        RawTable::new(columns, rows).map_err(|e| e.context(origin.display().to_string()))
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn require_column(&self, name: &str, context: &str) -> Result<usize> {
        self.column_index(name).ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
            context: Some(context.to_string()),
        })
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.rows[row][col]
    }

    /// Appends a derived column.
    pub fn push_column(&mut self, name: String, values: Vec<Cell>) {
        debug_assert_eq!(values.len(), self.rows.len());
        self.columns.push(name);
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.push(v);
        }
    }

    /// Keeps only rows whose index satisfies `keep`.
    pub fn retain_rows(&mut self, mut keep: impl FnMut(usize, &[Cell]) -> bool) {
        let mut i = 0;
        self.rows.retain(|row| {
            let k = keep(i, row);
            i += 1;
            k
        });
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Loads a CSV file and checks that every column the schema refers to exists.
///
/// Columns the schema does not mention are kept until encoding.
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let table = RawTable::from_reader(std::io::BufReader::new(file), &schema.missing_values, path)?;
    for column in schema.referenced_source_columns() {
        table.require_column(column, &format!("required by schema `{}`", schema.name))?;
    }
    Ok(table)
}
