//! CSV ingestion and emission of datasets, result tables and ROC curves.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dcov::Dataset;
use crate::error::{Error, Result};
use crate::outlier::RocResult;
use crate::sim::ReplicationReport;

/// How the response column is picked out of a CSV header.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ResponseSelector {
    /// The last column.
    #[default]
    Last,
    Name(String),
    Index(usize),
}

impl ResponseSelector {
    /// A header name if one matches, otherwise a 0-based index.
    pub fn parse(s: &str) -> Self {
        match s.trim().parse::<usize>() {
            Ok(i) => ResponseSelector::Index(i),
            Err(_) => ResponseSelector::Name(s.trim().to_string()),
        }
    }

    fn resolve(&self, headers: &[String]) -> Result<usize> {
        match self {
            ResponseSelector::Last => Ok(headers.len() - 1),
            ResponseSelector::Name(name) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Input(format!("response column '{name}' not found"))),
            ResponseSelector::Index(i) => {
                // A purely numeric header name wins over the index reading.
                if let Some(pos) = headers.iter().position(|h| h == &i.to_string()) {
                    return Ok(pos);
                }
                if *i < headers.len() {
                    Ok(*i)
                } else {
                    Err(Error::Input(format!(
                        "response column index {i} out of range for {} columns",
                        headers.len()
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub predictor_names: Vec<String>,
    pub response_name: String,
    /// Rows removed for having a missing cell.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Reads a headed numeric CSV. Rows with an empty, `NA` or `NaN` cell are
/// dropped; predictors are optionally standardized to mean 0 and variance 1.
pub fn load_csv(
    path: impl AsRef<Path>,
    response: &ResponseSelector,
    standardize: bool,
) -> Result<LoadedCsv> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.len() < 2 {
        return Err(Error::Input(format!(
            "{}: need a response and at least one predictor column",
            path.display()
        )));
    }
    let resp = response.resolve(&headers)?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        if record.len() != headers.len() {
            return Err(Error::Input(format!(
                "row {line}: expected {} cells, found {}",
                headers.len(),
                record.len()
            )));
        }
        if record.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        let values = record
            .iter()
            .zip(&headers)
            .map(|(cell, name)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Input(format!(
                            "row {line}, column '{name}': '{cell}' is not a finite number"
                        ))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    if dropped > 0 {
        log::warn!(
            "{}: dropped {dropped} row(s) with missing values",
            path.display()
        );
    }
    if rows.len() < 2 {
        return Err(Error::Input(format!(
            "{}: fewer than 2 complete rows",
            path.display()
        )));
    }

    let n = rows.len();
    let pred_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != resp).collect();
    let mut x = DMatrix::from_fn(n, pred_cols.len(), |i, j| rows[i][pred_cols[j]]);
    let y = DVector::from_fn(n, |i, _| rows[i][resp]);
    if standardize {
        standardize_columns(
            &mut x,
            &pred_cols
                .iter()
                .map(|&j| headers[j].as_str())
                .collect::<Vec<_>>(),
        )?;
    }
    Ok(LoadedCsv {
        dataset: Dataset::new(x, y)?,
        predictor_names: pred_cols.iter().map(|&j| headers[j].clone()).collect(),
        response_name: headers[resp].clone(),
        dropped_rows: dropped,
    })
}

fn standardize_columns(x: &mut DMatrix<f64>, names: &[&str]) -> Result<()> {
    let n = x.nrows() as f64;
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1.0)).sqrt();
        if sd == 0.0 {
            return Err(Error::Input(format!(
                "column '{}' is constant and cannot be standardized",
                names[j]
            )));
        }
        col /= sd;
    }
    Ok(())
}

/// Writes a dataset with a header; values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_dataset_csv(
    path: impl AsRef<Path>,
    data: &Dataset,
    predictor_names: Option<&[String]>,
    response_name: &str,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = match predictor_names {
        Some(names) if names.len() == data.p() => names.to_vec(),
        Some(names) => {
            return Err(Error::Parameter(format!(
                "{} predictor names for {} columns",
                names.len(),
                data.p()
            )))
        }
        None => (1..=data.p()).map(|j| format!("x{j}")).collect(),
    };
    header.push(response_name.to_string());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.x().row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.y()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f).map_err(|e| Error::io(path, e))
}

pub const TABLE_HEADER: [&str; 6] = [
    "setting",
    "angle_mean",
    "angle_sd",
    "time_mean_s",
    "time_sd_s",
    "reps",
];

/// One row per method of the report, floats at 4 decimals.
pub fn emit_table(report: &ReplicationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(TABLE_HEADER)?;
    for m in &report.methods {
        w.write_record([
            format!(
                "{} n={} p={} {}",
                report.model, report.n, report.p, m.method
            ),
            format!("{:.4}", m.angle.mean),
            format!("{:.4}", m.angle.sd),
            format!("{:.4}", m.time_s.mean),
            format!("{:.4}", m.time_s.sd),
            m.completed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Two-column `fpr,tpr` CSV in curve order.
pub fn emit_roc(roc: &RocResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["fpr", "tpr"])?;
    for (fpr, tpr) in &roc.points {
        w.write_record([fpr.to_string(), tpr.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
