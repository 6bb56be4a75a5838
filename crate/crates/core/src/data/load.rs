use super::cell::{is_missing_token, parse_number};
use super::{ColumnProfile, ColumnType, Dataset};
use chrono::{DateTime, NaiveDate, NaiveDateTime};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

/// Share of non-missing values that must parse as numbers for a quantitative column.
pub const QUANTITATIVE_THRESHOLD: f64 = 0.95;
/// Share of non-missing values that must parse as dates for a temporal column.
pub const TEMPORAL_THRESHOLD: f64 = 0.80;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty stream")]
    Empty,
    #[error("no data rows")]
    NoDataRows,
    #[error("need at least 2 columns, found {0}")]
    TooFewColumns(usize),
    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

const DATETIME_FORMATS: [&str; 5] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
    "%Y/%m/%d %H:%M:%S",
];

const DATE_FORMATS: [&str; 8] = [
    "%Y-%m-%d",
    "%Y/%m/%d",
    "%m/%d/%Y",
    "%b %d %Y",
    "%d %b %Y",
    "%B %d %Y",
    "%b %d, %Y",
    "%d-%b-%y",
];

/// Parses common date and datetime spellings into epoch seconds (UTC).
/// Bare numbers are never dates.
pub fn parse_date(raw: &str) -> Option<i64> {
    let t = raw.trim();
    if t.is_empty() || parse_number(t).is_some() {
        return None;
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(dt.timestamp());
    }
    for f in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, f) {
            return Some(dt.and_utc().timestamp());
        }
    }
    for f in DATE_FORMATS {
        if let Ok(d) = NaiveDate::parse_from_str(t, f) {
            return d.and_hms_opt(0, 0, 0).map(|dt| dt.and_utc().timestamp());
        }
    }
    None
}

/// Infers a column type from raw cell text: quantitative when at least 95% of the
/// non-missing cells are numbers, else temporal when at least 80% are dates,
/// else nominal. All-missing columns are nominal.
pub fn infer_column_type<S: AsRef<str>>(values: &[S]) -> ColumnType {
    let present: Vec<&str> = values
        .iter()
        .map(AsRef::as_ref)
        .filter(|s| !is_missing_token(s))
        .collect();
    if present.is_empty() {
        return ColumnType::Nominal;
    }
    let n = present.len() as f64;
    let numeric = present.iter().filter(|s| parse_number(s).is_some()).count() as f64;
    if numeric / n >= QUANTITATIVE_THRESHOLD {
        return ColumnType::Quantitative;
    }
    let dates = present.iter().filter(|s| parse_date(s).is_some()).count() as f64;
    if dates / n >= TEMPORAL_THRESHOLD {
        return ColumnType::Temporal;
    }
    ColumnType::Nominal
}

/// Reads a CSV stream (header row first) into a typed [`Dataset`].
pub fn load_dataset<R: Read>(source: R, name: &str) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(DataError::Empty),
        Some(r) => r?,
    };
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if names.len() == 1 && names[0].is_empty() {
        return Err(DataError::Empty);
    }
    if names.len() < 2 {
        return Err(DataError::TooFewColumns(names.len()));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(DataError::DuplicateColumn(n.clone()));
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for record in records {
        let record = record?;
        // A trailing blank line parses as a single empty field.
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != names.len() {
            return Err(DataError::Ragged {
                line: record.position().map_or(0, |p| p.line()),
                expected: names.len(),
                found: record.len(),
            });
        }
        for (col, field) in raw.iter_mut().zip(record.iter()) {
            col.push(field.to_string());
        }
    }
    if raw[0].is_empty() {
        return Err(DataError::NoDataRows);
    }

    let columns = names
        .into_iter()
        .zip(raw)
        .map(|(name, values)| ColumnProfile::from_raw(name, &values))
        .collect();
    Ok(Dataset::new(name, columns))
}

pub fn load_dataset_from_path(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    let file = std::fs::File::open(path)?;
    load_dataset(std::io::BufReader::new(file), &name)
}
