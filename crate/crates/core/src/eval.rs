//! Score normalization and signed averaging for method/metric tables.
//!
//! Each column is rescaled to `[-1, 1]` by its own min and max; a row's
//! average is the sum of its normalized scores with `+1` for higher-better
//! and `-1` for lower-better columns.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::container::{ContainerError, MiscContainer, Section};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("table has no rows")]
    EmptyTable,
    #[error("table has no columns")]
    NoColumns,
    #[error("row {row} has {got} values, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Self::HigherBetter => 1.0,
            Self::LowerBetter => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HigherBetter => "higher",
            Self::LowerBetter => "lower",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "higher" | "+" | "+1" | "up" => Some(Self::HigherBetter),
            "lower" | "-" | "-1" | "down" => Some(Self::LowerBetter),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub direction: Direction,
}

impl Column {
    pub fn new(name: impl Into<String>, direction: Direction) -> Self {
        Self { name: name.into(), direction }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub label: String,
    pub values: Vec<f64>,
}

impl Row {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self { label: label.into(), values }
    }
}

/// Rectangular, finite table with a direction per column. May be empty of
/// rows; [`normalize`] rejects that.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    columns: Vec<Column>,
    rows: Vec<Row>,
}

impl MetricsTable {
    pub fn new(columns: Vec<Column>, rows: Vec<Row>) -> Result<Self, EvalError> {
        if columns.is_empty() {
            return Err(EvalError::NoColumns);
        }
        for (r, row) in rows.iter().enumerate() {
            if row.values.len() != columns.len() {
                return Err(EvalError::Ragged { row: r, got: row.values.len(), expected: columns.len() });
            }
            if let Some(c) = row.values.iter().position(|v| !v.is_finite()) {
                return Err(EvalError::NonFinite { row: r, column: c });
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedRow {
    pub label: String,
    pub values: Vec<f64>,
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedReport {
    pub columns: Vec<Column>,
    pub rows: Vec<NormalizedRow>,
}

pub fn normalize(table: &MetricsTable) -> Result<NormalizedReport, EvalError> {
    if table.rows.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    let ranges: Vec<(f64, f64)> = (0..table.columns.len())
        .map(|c| {
            table.rows.iter().map(|r| r.values[c]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        })
        .collect();
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let values: Vec<f64> = row
                .values
                .iter()
                .zip(&ranges)
                .map(|(&v, &(lo, hi))| if hi == lo { 0.0 } else { 2.0 * (v - lo) / (hi - lo) - 1.0 })
                .collect();
            let average = values.iter().zip(&table.columns).map(|(v, c)| c.direction.sign() * v).sum();
            NormalizedRow { label: row.label.clone(), values, average }
        })
        .collect();
    Ok(NormalizedReport { columns: table.columns.clone(), rows })
}

/// One row per container: total bpp then per-section bpp, all lower-better.
pub fn bpp_table<S: AsRef<str>>(containers: &[(MiscContainer, S)]) -> Result<MetricsTable, EvalError> {
    if containers.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    let mut columns = alloc::vec![Column::new("bpp", Direction::LowerBetter)];
    for s in Section::ALL {
        columns.push(Column::new(alloc::format!("{}_bpp", s.name()), Direction::LowerBetter));
    }
    let rows = containers
        .iter()
        .map(|(c, label)| {
            let report = c.rate_report()?;
            let mut values = alloc::vec![report.bpp()];
            values.extend(Section::ALL.iter().map(|&s| report.section_bpp(s)));
            Ok(Row::new(label.as_ref(), values))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    MetricsTable::new(columns, rows)
}
