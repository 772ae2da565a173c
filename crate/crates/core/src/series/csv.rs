use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::{PriceSeries, TimeSeries};
use crate::error::{Error, Result};

/// Which columns to read from a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsvSchema {
    Prices {
        date_column: String,
        close_column: String,
    },
    Values {
        value_column: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedSeries {
    Prices(PriceSeries),
    Values(TimeSeries),
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LoadedSeries> {
    match schema {
        CsvSchema::Prices {
            date_column,
            close_column,
        } => load_prices(path, date_column, close_column).map(LoadedSeries::Prices),
        CsvSchema::Values { value_column } => {
            load_values(path, value_column).map(LoadedSeries::Values)
        }
    }
}

/// Reads a price file. Rows must already be in date order; the loader
/// checks the order but never sorts.
pub fn load_prices(
    path: impl AsRef<Path>,
    date_column: &str,
    close_column: &str,
) -> Result<PriceSeries> {
    let path = path.as_ref();
    let table = read_columns(path, &[date_column, close_column])?;
    let mut dates = Vec::with_capacity(table.len());
    let mut closes = Vec::with_capacity(table.len());
    for (i, row) in table.into_iter().enumerate() {
        let row_no = i + 1;
        let date = row[0]
            .trim()
            .parse::<NaiveDate>()
            .map_err(|_| parse_error(path, row_no, date_column, &row[0]))?;
        let close = parse_number(path, row_no, close_column, &row[1])?;
        dates.push(date);
        closes.push(close);
    }
    PriceSeries::new(dates, closes).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn load_values(path: impl AsRef<Path>, value_column: &str) -> Result<TimeSeries> {
    let path = path.as_ref();
    let table = read_columns(path, &[value_column])?;
    let values = table
        .iter()
        .enumerate()
        .map(|(i, row)| parse_number(path, i + 1, value_column, &row[0]))
        .collect::<Result<Vec<_>>>()?;
    TimeSeries::new(values)
}

/// Writes one value per row under a single header.
pub fn write_values<W: Write>(out: W, header: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let path = PathBuf::from("<output>");
    let wrap = |source| Error::Csv {
        path: path.clone(),
        source,
    };
    w.write_record([header]).map_err(wrap)?;
    for v in values {
        w.write_record([v.to_string()]).map_err(wrap)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `date,<header>` rows.
pub fn write_dated_values<W: Write>(out: W, dates: &[NaiveDate], header: &str, values: &[f64]) -> Result<()> {
    if dates.len() != values.len() {
        return Err(Error::InvalidInput(format!(
            "{} dates for {} values",
            dates.len(),
            values.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let path = PathBuf::from("<output>");
    let wrap = |source| Error::Csv {
        path: path.clone(),
        source,
    };
    w.write_record(["date", header]).map_err(wrap)?;
    for (d, v) in dates.iter().zip(values) {
        w.write_record([d.to_string(), v.to_string()]).map_err(wrap)?;
    }
    w.flush()?;
    Ok(())
}

/// Column names of a CSV file, in order.
pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(headers)
}

fn read_columns(path: &Path, columns: &[&str]) -> Result<Vec<Vec<String>>> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(wrap)?;
    let headers = reader.headers().map_err(wrap)?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let idx = columns
        .iter()
        .map(|&name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(wrap)?;
        rows.push(
            idx.iter()
                .map(|&i| record.get(i).unwrap_or("").to_string())
                .collect(),
        );
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(rows)
}

fn parse_number(path: &Path, row: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_error(path, row, column, raw))
}

fn parse_error(path: &Path, row: usize, column: &str, raw: &str) -> Error {
    Error::ParseValue {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        value: raw.to_string(),
    }
}
