//! CSV ingestion and export, plus serde helpers for matrices.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::TimeSeriesSet;

/// Serializes a `DMatrix<f64>` as a row-major array of rows.
pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Rows must all have the same length. An empty list gives a 0x0 matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(format!("row {i} has {} entries, expected {ncols}", r.len()));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

/// A labelled numeric table: one column per header entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Reads a CSV with a header row and only numeric cells. Line numbers in
/// errors are 1-based and count the header.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "no columns in header".into(),
        });
    }
    let width = header.len();
    let mut data = Vec::new();
    let mut nrows = 0;
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        if record.len() == 1 && record.get(0) == Some("") && width > 1 {
            continue;
        }
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!("missing value in column {} ({})", col + 1, header[col]),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {} ({}): `{cell}` is not a number", col + 1, header[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {} ({}): non-finite value", col + 1, header[col]),
                });
            }
            data.push(v);
        }
        nrows += 1;
    }
    Ok(Table {
        header,
        values: DMatrix::from_row_slice(nrows, width, &data),
    })
}

fn csv_error(err: csv::Error, fallback_line: usize) -> Error {
    let line = err
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    Error::Parse {
        line,
        message: err.to_string(),
    }
}

/// Reads a time-series CSV: header of labels, one column per series.
pub fn read_series_csv<R: Read>(reader: R) -> Result<TimeSeriesSet> {
    let table = read_table(reader)?;
    TimeSeriesSet::with_labels(table.values, table.header)
}

/// Writes a matrix with a header row. Values use the shortest decimal form
/// that parses back to the same `f64`.
pub fn write_table<W: Write>(writer: W, header: &[String], values: &DMatrix<f64>) -> Result<()> {
    if header.len() != values.ncols() {
        return Err(Error::Shape(format!(
            "header has {} names for {} columns",
            header.len(),
            values.ncols()
        )));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header).map_err(io_error)?;
    let mut row = Vec::with_capacity(values.ncols());
    for r in values.row_iter() {
        row.clear();
        row.extend(r.iter().map(|v| format!("{v:?}")));
        wtr.write_record(&row).map_err(io_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_series_csv<W: Write>(writer: W, ts: &TimeSeriesSet) -> Result<()> {
    write_table(writer, ts.labels(), ts.values())
}

fn io_error(err: csv::Error) -> Error {
    Error::Io(err.to_string())
}

/// `x1, x2, ...` style column names.
pub fn default_labels(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}
