//! CSV ingestion and emission, plus the per-column affine input coding.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// A numeric table read from a CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn ncols(&self) -> usize {
        self.header.len()
    }

    /// Columns `0..k` as an n × k matrix.
    pub fn leading_columns(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), k, |i, j| self.rows[i][j])
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Reads a comma-separated numeric table. Rows are numbered from 1 for the
/// header, so the first data row is row 2; columns are numbered from 1.
pub fn read_table(path: &Path) -> CliResult<Table> {
    let parse_err = |row: usize, column: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => parse_err(1, 0, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, 0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(1, 0, "missing header row".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| parse_err(row, 0, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                row,
                record.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(row, j + 1, format!("'{cell}' is not a finite number")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(parse_err(2, 0, "no data rows".into()));
    }
    Ok(Table { header, rows })
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Writes a header and numeric rows.
pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Per-column min/max coding of inputs onto [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputCoding {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl InputCoding {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let min = x.column_iter().map(|c| c.min()).collect();
        let max = x.column_iter().map(|c| c.max()).collect();
        InputCoding { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Constant columns have no spread; they code to 0 with unit scale.
    fn scale(&self, j: usize) -> f64 {
        let r = self.max[j] - self.min[j];
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn code(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.min[j]) / self.scale(j))
    }

    pub fn decode(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| self.min[j] + u[(i, j)] * self.scale(j))
    }
}

/// Parses `a:b:k` into `k` evenly spaced values from `a` to `b`.
pub fn parse_axis(spec: &str) -> CliResult<Vec<f64>> {
    let bad = |m: &str| CliError::Usage(format!("grid spec '{spec}': {m}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected start:end:count"));
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad("start is not a number"))?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad("end is not a number"))?;
    let k: usize = parts[2].trim().parse().map_err(|_| bad("count is not a positive integer"))?;
    match k {
        0 => Err(bad("count must be positive")),
        1 => Ok(vec![a]),
        _ => Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()),
    }
}

/// Builds a product grid. `spec` is one axis spec shared by every input, or
/// `p` comma-separated axis specs. The first column varies fastest.
pub fn parse_grid(spec: &str, p: usize) -> CliResult<DMatrix<f64>> {
    let axes: Vec<Vec<f64>> = spec.split(',').map(parse_axis).collect::<CliResult<_>>()?;
    let axes = match axes.len() {
        1 => vec![axes[0].clone(); p],
        k if k == p => axes,
        k => {
            return Err(CliError::Usage(format!(
                "grid spec has {k} axes but the chain has {p} inputs"
            )))
        }
    };
    let total: usize = axes.iter().map(Vec::len).product();
    Ok(DMatrix::from_fn(total, p, |i, j| {
        let stride: usize = axes[..j].iter().map(Vec::len).product();
        axes[j][(i / stride) % axes[j].len()]
    }))
}
