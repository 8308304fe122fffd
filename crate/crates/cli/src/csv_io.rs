//! Unit-tagged CSV tables.
//!
//! Header cells are `name [unit]`; values are written with 17 significant
//! digits so that re-import is bit exact. Lines end in LF.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }

    pub fn header(&self) -> String {
        format!("{} [{}]", self.name, self.unit)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Self {
        Self { columns }
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Rectangular, finite and uniquely named; a `frequency` column must be
    /// strictly increasing.
    pub fn validate(&self) -> Result<(), String> {
        if self.columns.is_empty() {
            return Err("table has no columns".into());
        }
        let rows = self.rows();
        for (i, c) in self.columns.iter().enumerate() {
            if c.values.len() != rows {
                return Err(format!("column `{}` has {} rows, expected {rows}", c.name, c.values.len()));
            }
            if c.name.is_empty() || c.name.contains(['[', ']', ',', '\n']) || c.unit.contains([']', ',', '\n']) {
                return Err(format!("bad column name or unit `{}`", c.header()));
            }
            if self.columns[..i].iter().any(|o| o.name == c.name) {
                return Err(format!("duplicate column `{}`", c.name));
            }
            if let Some(k) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(format!("non-finite value in `{}` at row {}", c.name, k + 1));
            }
        }
        if let Some(f) = self.column("frequency") {
            if let Some(k) = f.values.windows(2).position(|w| !(w[1] > w[0])) {
                return Err(format!("frequency column not strictly increasing at row {}", k + 2));
            }
        }
        Ok(())
    }

    /// Serialized bytes, as written by [`write_csv`].
    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        self.validate().map_err(CliError::Table)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Table(e.to_string());
        w.write_record(self.columns.iter().map(Column::header)).map_err(csv_err)?;
        let mut record = Vec::with_capacity(self.columns.len());
        for r in 0..self.rows() {
            record.clear();
            record.extend(self.columns.iter().map(|c| format!("{:.16e}", c.values[r])));
            w.write_record(&record).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| CliError::Table(e.to_string()))
    }
}

pub fn write_csv(path: &Path, table: &Table) -> CliResult<()> {
    let bytes = table.to_bytes()?;
    let io = |e| CliError::io(path, e);
    let mut f = File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    f.sync_all().map_err(io)
}

fn parse_header(cell: &str) -> Option<(String, String)> {
    let (name, rest) = cell.split_once(" [")?;
    let unit = rest.strip_suffix(']')?;
    Some((name.to_string(), unit.to_string()))
}

/// Reads and validates a table written by [`write_csv`].
pub fn read_csv(path: &Path) -> CliResult<Table> {
    let bad = |msg: String| CliError::Csv {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let mut columns = Vec::with_capacity(headers.len());
    for cell in headers.iter() {
        let (name, unit) = parse_header(cell).ok_or_else(|| bad(format!("header cell `{cell}` is not `name [unit]`")))?;
        columns.push(Column::new(name, unit, Vec::new()));
    }
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for (c, cell) in columns.iter_mut().zip(rec.iter()) {
            let v = cell
                .parse::<f64>()
                .map_err(|_| bad(format!("row {}: `{cell}` is not a number", row + 2)))?;
            c.values.push(v);
        }
    }
    let table = Table { columns };
    table.validate().map_err(bad)?;
    Ok(table)
}
