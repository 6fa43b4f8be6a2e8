//! Numeric column tables persisted as CSV. Values are written in shortest
//! round-trip exponent form, so equal tables give equal bytes.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::ShapeMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingSeries(format!("column `{name}` not found")))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// `(x, y)` pairs of two columns.
    pub fn series(&self, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
        Ok(self.column(x)?.into_iter().zip(self.column(y)?).collect())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let columns: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut t = Table::new(columns);
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Format(format!("csv: `{s}` is not a number")))
                })
                .collect::<Result<Vec<_>>>()?;
            t.push(row)?;
        }
        Ok(t)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Table::new(["t", "v"]);
        t.push(vec![0.0, 1.0 / 3.0]).unwrap();
        t.push(vec![1e-300, f64::INFINITY]).unwrap();
        t.push(vec![-2.5, 5e-324]).unwrap();
        let bytes = t.to_csv_bytes().unwrap();
        let back = Table::from_csv_bytes(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv_bytes().unwrap(), bytes);
    }

    #[test]
    fn missing_column_is_named() {
        let t = Table::new(["t"]);
        let e = t.column("energy").unwrap_err();
        assert!(e.to_string().contains("energy"));
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn ragged_rows_rejected() {
        let mut t = Table::new(["a", "b"]);
        assert!(t.push(vec![1.0]).is_err());
        assert!(Table::from_csv_bytes(b"a,b\n1,x\n").is_err());
    }
}
