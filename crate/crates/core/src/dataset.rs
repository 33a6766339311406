//! Column-major in-memory tables and CSV ingestion.
//!
//! Ingestion never coerces: every loaded cell is [`Cell::Text`]. Typing is the
//! profiler's job, and the executor reads numbers out of text on demand.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::suggest::nearest_names;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("input is empty")]
    EmptyInput,
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("{0}")]
    UnknownColumn(UnknownColumn),
    #[error("column '{name}' has {found} cells, dataset has {expected} rows")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid UTF-8 or CSV syntax: {0}")]
    Malformed(String),
}

/// A failed exact-name column lookup. The suggestions are the raw material for
/// the error trace fed back to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownColumn {
    pub name: String,
    pub suggestions: Vec<String>,
}

impl fmt::Display for UnknownColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown column '{}'", self.name)?;
        if !self.suggestions.is_empty() {
            write!(f, " (did you mean: {})", self.suggestions.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    /// Seconds since the Unix epoch, UTC.
    Timestamp(i64),
}

impl Cell {
    pub fn kind(&self) -> CellKind {
        match self {
            Cell::Null => CellKind::Null,
            Cell::Integer(_) => CellKind::Integer,
            Cell::Real(_) => CellKind::Real,
            Cell::Text(_) => CellKind::Text,
            Cell::Timestamp(_) => CellKind::Timestamp,
        }
    }

    /// Text form used for CSV output, samples and labels. Null renders empty.
    pub fn render(&self) -> String {
        match self {
            Cell::Null => String::new(),
            Cell::Integer(v) => v.to_string(),
            Cell::Real(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Timestamp(secs) => render_timestamp(*secs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Null,
    Integer,
    Real,
    Text,
    Timestamp,
}

pub fn render_timestamp(secs: i64) -> String {
    DateTime::<Utc>::from_timestamp(secs, 0)
        .map(|dt| dt.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| secs.to_string())
}

pub fn parse_timestamp(text: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(text.trim())
        .ok()
        .map(|dt| dt.with_timezone(&Utc).timestamp())
}

/// A parsed numeric literal. Integers stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Number {
    Integer(i64),
    Real(f64),
}

impl Number {
    pub fn as_f64(self) -> f64 {
        match self {
            Number::Integer(v) => v as f64,
            Number::Real(v) => v,
        }
    }
}

/// Integer first, then finite float. `NaN` and `inf` are not numbers here.
pub fn parse_number(text: &str) -> Option<Number> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Ok(v) = t.parse::<i64>() {
        return Some(Number::Integer(v));
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() && t.bytes().any(|b| b.is_ascii_digit()) => Some(Number::Real(v)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    cells: Vec<Cell>,
}

impl Column {
    pub fn new(name: impl Into<String>, cells: Vec<Cell>) -> Self {
        Self {
            name: name.into().trim().to_string(),
            cells,
        }
    }

    pub fn from_text<S: AsRef<str>>(name: impl Into<String>, values: &[S]) -> Self {
        Self::new(
            name,
            values
                .iter()
                .map(|v| Cell::Text(v.as_ref().to_string()))
                .collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    columns: Vec<Column>,
    row_count: usize,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
        }
    }
}

impl Dataset {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self, DatasetError> {
        let row_count = columns.first().map(Column::len).unwrap_or(0);
        let mut seen = HashSet::new();
        for col in &columns {
            if !seen.insert(col.name.clone()) {
                return Err(DatasetError::DuplicateColumn(col.name.clone()));
            }
            if col.len() != row_count {
                return Err(DatasetError::LengthMismatch {
                    name: col.name.clone(),
                    expected: row_count,
                    found: col.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            columns,
            row_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(Column::name)
    }

    /// Exact, case-sensitive lookup.
    pub fn get_column(&self, name: &str) -> Result<&Column, DatasetError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| {
                DatasetError::UnknownColumn(UnknownColumn {
                    name: name.to_string(),
                    suggestions: nearest_names(name, self.column_names()),
                })
            })
    }

    pub fn load_csv<R: Read>(
        name: impl Into<String>,
        source: R,
        options: &CsvOptions,
    ) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(options.delimiter)
            .has_headers(false)
            .flexible(true)
            .from_reader(source);

        let mut records = reader.records();
        let mut columns: Vec<Vec<Cell>>;
        let names: Vec<String>;
        let mut data_row = 0usize;

        let first = match records.next() {
            None => return Err(DatasetError::EmptyInput),
            Some(r) => r.map_err(|e| DatasetError::Malformed(e.to_string()))?,
        };
        if options.has_header {
            names = first.iter().map(|h| h.trim().to_string()).collect();
            columns = vec![Vec::new(); names.len()];
        } else {
            names = (1..=first.len()).map(|i| format!("column_{i}")).collect();
            columns = first
                .iter()
                .map(|v| vec![Cell::Text(v.to_string())])
                .collect();
            data_row = 1;
        }

        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(DatasetError::DuplicateColumn(n.clone()));
            }
        }

        for record in records {
            let record = record.map_err(|e| DatasetError::Malformed(e.to_string()))?;
            if record.len() != names.len() {
                return Err(DatasetError::RaggedRow {
                    row: data_row,
                    expected: names.len(),
                    found: record.len(),
                });
            }
            for (col, field) in columns.iter_mut().zip(record.iter()) {
                col.push(Cell::Text(field.to_string()));
            }
            data_row += 1;
        }

        let columns = names
            .into_iter()
            .zip(columns)
            .map(|(n, cells)| Column { name: n, cells })
            .collect();
        Dataset::new(name, columns)
    }

    pub fn write_csv<W: Write>(&self, sink: W, delimiter: u8) -> Result<(), DatasetError> {
        let mut writer = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(sink);
        let io = |e: csv::Error| DatasetError::Malformed(e.to_string());
        writer.write_record(self.column_names()).map_err(io)?;
        for row in 0..self.row_count {
            writer
                .write_record(self.columns.iter().map(|c| c.cells[row].render()))
                .map_err(io)?;
        }
        writer
            .flush()
            .map_err(|e| DatasetError::Malformed(e.to_string()))
    }

    /// Structured debug dump: names, cell kinds present per column, row count.
    pub fn debug_dump(&self) -> serde_json::Value {
        let columns: Vec<_> = self
            .columns
            .iter()
            .map(|c| {
                let mut kinds: Vec<CellKind> = c.cells.iter().map(Cell::kind).collect();
                kinds.sort();
                kinds.dedup();
                serde_json::json!({ "name": c.name, "cell_kinds": kinds })
            })
            .collect();
        serde_json::json!({
            "name": self.name,
            "row_count": self.row_count,
            "columns": columns,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Dataset, DatasetError> {
        Dataset::load_csv("t", text.as_bytes(), &CsvOptions::default())
    }

    #[test]
    fn loads_three_by_two() {
        let d = load("a,b\n1,2\n3,4\n5,6\n").unwrap();
        assert_eq!(d.column_count(), 2);
        assert_eq!(d.row_count(), 3);
        assert_eq!(d.get_column("b").unwrap().cells()[2], Cell::Text("6".into()));
    }

    #[test]
    fn ragged_row_reports_index() {
        let err = load("a,b\n1,2\n3,4,5\n").unwrap_err();
        assert_eq!(
            err,
            DatasetError::RaggedRow {
                row: 1,
                expected: 2,
                found: 3
            }
        );
    }

    #[test]
    fn duplicate_after_trim() {
        assert_eq!(
            load("a, a\n1,2\n").unwrap_err(),
            DatasetError::DuplicateColumn("a".into())
        );
        // case-sensitive: distinct names
        assert!(load("a,A\n1,2\n").is_ok());
    }

    #[test]
    fn empty_input() {
        assert_eq!(load("").unwrap_err(), DatasetError::EmptyInput);
    }

    #[test]
    fn header_only_has_zero_rows() {
        let d = load("x,y\n").unwrap();
        assert_eq!(d.row_count(), 0);
        assert_eq!(d.column_count(), 2);
    }

    #[test]
    fn empty_field_is_empty_text_not_null() {
        let d = load("a,b\n,1\n").unwrap();
        assert_eq!(d.columns()[0].cells()[0], Cell::Text(String::new()));
    }

    #[test]
    fn headerless_names_are_positional() {
        let d = Dataset::load_csv(
            "t",
            "1;2\n3;4\n".as_bytes(),
            &CsvOptions {
                delimiter: b';',
                has_header: false,
            },
        )
        .unwrap();
        assert_eq!(d.column_names().collect::<Vec<_>>(), ["column_1", "column_2"]);
        assert_eq!(d.row_count(), 2);
    }

    #[test]
    fn lookup_suggests_near_names() {
        let d = load("country,New cases,WHO Region\nx,1,y\n").unwrap();
        match d.get_column("newcases").unwrap_err() {
            DatasetError::UnknownColumn(u) => assert_eq!(u.suggestions, ["New cases"]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(d.get_column("WHO Region").unwrap().name(), "WHO Region");
        // exact match only
        assert!(d.get_column("who region").is_err());
    }

    #[test]
    fn single_column_identity() {
        let d = load("a\n1\n").unwrap();
        assert_eq!(d.get_column("a").unwrap(), &d.columns()[0]);
    }

    #[test]
    fn quoted_fields_round_trip() {
        let src = "name,note\nCongo (Kinshasa),\"a, b\"\nCote d'Ivoire,\"say \"\"hi\"\"\"\n";
        let d = load(src).unwrap();
        let mut out = Vec::new();
        d.write_csv(&mut out, b',').unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), src);
    }

    #[test]
    fn timestamp_renders_iso() {
        let secs = parse_timestamp("2020-07-27T12:30:05Z").unwrap();
        assert_eq!(Cell::Timestamp(secs).render(), "2020-07-27T12:30:05Z");
    }

    #[test]
    fn number_parsing_rejects_non_finite() {
        assert_eq!(parse_number(" 42 "), Some(Number::Integer(42)));
        assert_eq!(parse_number("2.5"), Some(Number::Real(2.5)));
        assert_eq!(parse_number("NaN"), None);
        assert_eq!(parse_number("inf"), None);
        assert_eq!(parse_number(""), None);
        assert_eq!(parse_number("Europe"), None);
    }

    #[test]
    fn dump_lists_kinds() {
        let d = load("a\nx\n").unwrap();
        let dump = d.debug_dump();
        assert_eq!(dump["row_count"], 1);
        assert_eq!(dump["columns"][0]["cell_kinds"][0], "text");
    }
}
