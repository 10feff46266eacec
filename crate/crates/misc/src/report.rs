//! JSON and CSV forms of metric tables and normalized reports.
//!
//! CSV files start with a header (`label`, then one name per column) and a
//! mandatory second row whose first cell is `direction` and whose other
//! cells are `higher` or `lower`. Normalized reports append an `average`
//! column. Numbers are written in shortest round-trip form, so parsing an
//! emitted file gives back the same values bit for bit.

use std::str::FromStr;

use misc_core::eval::{Column, Direction, EvalError, MetricsTable, NormalizedReport, NormalizedRow, Row};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

impl Format {
    /// Guesses from a file extension; anything but `.json` is CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report format {0:?}")]
    UnknownFormat(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Layout(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn layout(msg: impl Into<String>) -> ReportError {
    ReportError::Layout(msg.into())
}

#[derive(Serialize, Deserialize)]
struct ColumnJson {
    name: String,
    direction: String,
}

#[derive(Serialize, Deserialize)]
struct RowJson {
    label: String,
    values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    average: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    columns: Vec<ColumnJson>,
    rows: Vec<RowJson>,
}

fn columns_json(columns: &[Column]) -> Vec<ColumnJson> {
    columns.iter().map(|c| ColumnJson { name: c.name.clone(), direction: c.direction.as_str().into() }).collect()
}

fn columns_from_json(columns: Vec<ColumnJson>) -> Result<Vec<Column>, ReportError> {
    columns
        .into_iter()
        .map(|c| {
            let d = Direction::parse(&c.direction).ok_or_else(|| layout(format!("column {}: bad direction {:?}", c.name, c.direction)))?;
            Ok(Column::new(c.name, d))
        })
        .collect()
}

fn to_json(t: &TableJson) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(t).expect("finite tables serialize");
    out.push(b'\n');
    out
}

fn write_csv(columns: &[Column], rows: impl Iterator<Item = (String, Vec<f64>)>, average: bool) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["label".to_string()];
    header.extend(columns.iter().map(|c| c.name.clone()));
    let mut dirs = vec!["direction".to_string()];
    dirs.extend(columns.iter().map(|c| c.direction.as_str().to_string()));
    if average {
        header.push("average".into());
        dirs.push(Direction::HigherBetter.as_str().into());
    }
    w.write_record(&header)?;
    w.write_record(&dirs)?;
    for (label, values) in rows {
        let mut rec = vec![label];
        rec.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| layout(e.to_string()))
}

type LabeledRows = Vec<(String, Vec<f64>)>;

/// Returns the columns and `(label, values)` rows of a CSV table.
fn read_csv(bytes: &[u8]) -> Result<(Vec<Column>, LabeledRows), ReportError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(bytes);
    let mut records = r.records();
    let header = records.next().ok_or_else(|| layout("missing header row"))??;
    let dirs = records.next().ok_or_else(|| layout("missing direction row"))??;
    if header.len() < 2 {
        return Err(layout("header needs a label column and at least one metric"));
    }
    if dirs.get(0) != Some("direction") || dirs.len() != header.len() {
        return Err(layout("second row must be `direction` followed by one entry per column"));
    }
    let columns = header
        .iter()
        .zip(dirs.iter())
        .skip(1)
        .map(|(name, d)| {
            let d = Direction::parse(d).ok_or_else(|| layout(format!("column {name}: bad direction {d:?}")))?;
            Ok(Column::new(name, d))
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(layout(format!("data row {} has {} cells, expected {}", i + 1, rec.len(), header.len())));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| layout(format!("data row {}: {v:?} is not a number", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((rec[0].to_string(), values));
    }
    Ok((columns, rows))
}

pub fn emit_table(table: &MetricsTable, format: Format) -> Result<Vec<u8>, ReportError> {
    match format {
        Format::Json => Ok(to_json(&TableJson {
            columns: columns_json(table.columns()),
            rows: table.rows().iter().map(|r| RowJson { label: r.label.clone(), values: r.values.clone(), average: None }).collect(),
        })),
        Format::Csv => write_csv(table.columns(), table.rows().iter().map(|r| (r.label.clone(), r.values.clone())), false),
    }
}

pub fn parse_table(bytes: &[u8], format: Format) -> Result<MetricsTable, ReportError> {
    let (columns, rows) = match format {
        Format::Json => {
            let t: TableJson = serde_json::from_slice(bytes)?;
            (columns_from_json(t.columns)?, t.rows.into_iter().map(|r| (r.label, r.values)).collect())
        }
        Format::Csv => read_csv(bytes)?,
    };
    Ok(MetricsTable::new(columns, rows.into_iter().map(|(l, v)| Row::new(l, v)).collect())?)
}

pub fn emit_report(report: &NormalizedReport, format: Format) -> Result<Vec<u8>, ReportError> {
    match format {
        Format::Json => Ok(to_json(&TableJson {
            columns: columns_json(&report.columns),
            rows: report
                .rows
                .iter()
                .map(|r| RowJson { label: r.label.clone(), values: r.values.clone(), average: Some(r.average) })
                .collect(),
        })),
        Format::Csv => write_csv(
            &report.columns,
            report.rows.iter().map(|r| {
                let mut v = r.values.clone();
                v.push(r.average);
                (r.label.clone(), v)
            }),
            true,
        ),
    }
}

pub fn parse_report(bytes: &[u8], format: Format) -> Result<NormalizedReport, ReportError> {
    match format {
        Format::Json => {
            let t: TableJson = serde_json::from_slice(bytes)?;
            let columns = columns_from_json(t.columns)?;
            let rows = t
                .rows
                .into_iter()
                .map(|r| {
                    let average = r.average.ok_or_else(|| layout(format!("row {} lacks an average", r.label)))?;
                    if r.values.len() != columns.len() {
                        return Err(layout(format!("row {} has {} values", r.label, r.values.len())));
                    }
                    Ok(NormalizedRow { label: r.label, values: r.values, average })
                })
                .collect::<Result<Vec<_>, ReportError>>()?;
            Ok(NormalizedReport { columns, rows })
        }
        Format::Csv => {
            let (mut columns, rows) = read_csv(bytes)?;
            match columns.pop() {
                Some(c) if c.name == "average" && !columns.is_empty() => {}
                _ => return Err(layout("last column must be `average`")),
            }
            let rows = rows
                .into_iter()
                .map(|(label, mut values)| {
                    let average = values.pop().expect("row width checked against header");
                    NormalizedRow { label, values, average }
                })
                .collect();
            Ok(NormalizedReport { columns, rows })
        }
    }
}

/// Direction of a metric the backends are known to report.
pub fn metric_direction(name: &str) -> Option<Direction> {
    match name.to_ascii_lowercase().as_str() {
        "psnr" | "ssim" | "clipsim" | "clipiqa" => Some(Direction::HigherBetter),
        "mse" | "lpips" | "niqe" => Some(Direction::LowerBetter),
        _ => None,
    }
}
