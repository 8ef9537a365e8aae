use std::path::Path;

use crate::error::{LabError, Result};

/// A CSV file held as strings, addressed by header name.
#[derive(Debug, Clone)]
pub(crate) struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub(crate) fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        let parse_err = |e: csv::Error| LabError::Parse {
            offset: e.position().map_or(0, |p| p.byte()),
            msg: format!("{}: {e}", path.display()),
        };
        let headers = reader.headers().map_err(parse_err)?.iter().map(String::from).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(parse_err)?;
        Ok(Self { headers, rows })
    }

    pub(crate) fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |r| Row { table: self, cells: r })
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Row<'a> {
    table: &'a Table,
    cells: &'a [String],
}

impl<'a> Row<'a> {
    pub(crate) fn get(&self, column: &str) -> Result<&'a str> {
        let idx = self
            .table
            .headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| LabError::Validation(format!("missing column {column}")))?;
        self.cells
            .get(idx)
            .map(String::as_str)
            .ok_or_else(|| LabError::Validation(format!("short row for column {column}")))
    }

    pub(crate) fn f64(&self, column: &str) -> Result<f64> {
        let raw = self.get(column)?;
        raw.parse()
            .map_err(|_| LabError::Validation(format!("column {column}: {raw:?} is not a number")))
    }
}
