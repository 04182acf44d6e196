use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A raw cell; `None` is a missing value (empty string or literal `NA`).
pub type RawValue = Option<String>;

/// Untyped survey rows as read from CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<RawValue>>,
}

impl RawTable {
    pub fn new(headers: Vec<String>) -> Self {
        Self { headers, rows: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<RawValue>> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("column `{name}` missing from input")))?;
        Ok(self.rows.iter().map(|r| r[j].clone()).collect())
    }

    pub fn push_row(&mut self, row: Vec<RawValue>) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(Error::LengthMismatch(row.len(), self.headers.len()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut table = RawTable::new(headers);
        for rec in rdr.records() {
            let rec = rec?;
            table.rows.push(rec.iter().map(parse_cell).collect());
        }
        Ok(table)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.as_deref().unwrap_or("")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.to_writer(BufWriter::new(File::create(path)?))
    }
}

fn parse_cell(s: &str) -> RawValue {
    let t = s.trim();
    if t.is_empty() || t == "NA" {
        None
    } else {
        Some(t.to_string())
    }
}
