use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Num(x) => Some(x),
            Value::Text(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    fn parse(s: &str) -> Self {
        if let Ok(i) = s.parse::<i64>() {
            Value::Int(i)
        } else if let Ok(x) = s.parse::<f64>() {
            Value::Num(x)
        } else {
            Value::Text(s.to_string())
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            // 17 significant digits; always carries an exponent so it never reads back as an integer
            Value::Num(x) => write!(f, "{x:.16e}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<usize> for Value {
    fn from(i: usize) -> Self {
        Value::Int(i as i64)
    }
}

impl From<u64> for Value {
    fn from(i: u64) -> Self {
        Value::Int(i as i64)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Int(b as i64)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

/// Rectangular table with a mandatory header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Shape(format!(
                "row of {} cells for {} columns",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Malformed(format!("missing column `{name}`")))
    }

    /// Numeric column by name.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[k].as_f64().ok_or_else(|| {
                    Error::Malformed(format!("row {r}, column `{name}`: not a number"))
                })
            })
            .collect()
    }

    /// Fails unless the header is exactly `expected`.
    pub fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self
            .header
            .iter()
            .map(String::as_str)
            .eq(expected.iter().copied())
        {
            Ok(())
        } else {
            Err(Error::Malformed(format!(
                "expected header {:?}, found {:?}",
                expected, self.header
            )))
        }
    }

    pub fn to_writer(&self, w: impl Write) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn from_reader(r: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::Malformed("missing header".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Malformed(format!("record {}: {e}", i + 1)))?;
            rows.push(rec.iter().map(Value::parse).collect());
        }
        Ok(Self { header, rows })
    }
}

pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    table.to_writer(BufWriter::new(File::create(path)?))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Table> {
    Table::from_reader(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only() {
        let t = Table::new(["x", "y"]);
        let mut buf = Vec::new();
        t.to_writer(&mut buf).unwrap();
        assert_eq!(buf, b"x,y\n");
        assert_eq!(Table::from_reader(&buf[..]).unwrap(), t);
    }

    #[test]
    fn exact_decimal_roundtrip() {
        let mut t = Table::new(["id", "v", "name"]);
        t.push(vec![3usize.into(), 0.1.into(), "kde".into()])
            .unwrap();
        t.push(vec![4usize.into(), 1.0.into(), "skde".into()])
            .unwrap();
        let mut buf = Vec::new();
        t.to_writer(&mut buf).unwrap();
        let back = Table::from_reader(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column("v").unwrap(), vec![0.1, 1.0]);
    }

    #[test]
    fn ragged_rows() {
        let mut t = Table::new(["a"]);
        assert!(t.push(vec![1usize.into(), 2usize.into()]).is_err());
        assert!(matches!(
            Table::from_reader(&b"a,b\n1\n"[..]),
            Err(Error::Malformed(_))
        ));
    }
}
