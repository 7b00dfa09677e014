use std::path::Path;

use log::{info, warn};

use crate::error::{CliError, CliResult};

/// The numeric `(x, y)` pairs of a CSV file and how many rows were dropped
/// for missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dropped: usize,
}

impl Sample {
    pub fn range(&self) -> (f64, f64) {
        let lo = self.x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn is_missing(field: &str) -> bool {
    matches!(
        field.trim(),
        "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "null" | "NULL" | "."
    )
}

/// `None` for a missing value, an error naming the line for anything else
/// that does not parse as a finite number.
fn parse_field(field: &str, column: &str, line: u64) -> CliResult<Option<f64>> {
    if is_missing(field) {
        return Ok(None);
    }
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(CliError::Data(format!(
            "line {line}: column `{column}` holds `{field}`, which is not a number"
        ))),
    }
}

pub fn read_sample(path: &Path, x_col: &str, y_col: &str) -> CliResult<Sample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let find = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            CliError::Data(format!(
                "{}: no column `{name}` (have: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let (xi, yi) = (find(x_col)?, find(y_col)?);

    let mut sample = Sample {
        x: Vec::new(),
        y: Vec::new(),
        dropped: 0,
    };
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let x = parse_field(record.get(xi).unwrap_or(""), x_col, line)?;
        let y = parse_field(record.get(yi).unwrap_or(""), y_col, line)?;
        match (x, y) {
            (Some(x), Some(y)) => {
                sample.x.push(x);
                sample.y.push(y);
            }
            _ => sample.dropped += 1,
        }
    }
    if sample.dropped > 0 {
        warn!("dropped {} row(s) with missing values", sample.dropped);
    }
    if sample.x.is_empty() {
        return Err(CliError::Data(format!("{}: no complete rows", path.display())));
    }
    let (lo, hi) = sample.range();
    if !(lo < hi) {
        return Err(CliError::Data(format!(
            "{}: x-range is degenerate (all x = {lo}); the basis needs a nonempty domain",
            path.display()
        )));
    }
    info!("read {} rows from {}", sample.x.len(), path.display());
    Ok(sample)
}
