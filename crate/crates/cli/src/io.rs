//! Matrix, label and table files.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use clap::ValueEnum;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use rankspec::experiments::format_value;
use rankspec::tolerances::LOAD_SYMMETRY;
use rankspec::{Membership, SymMatrix};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    /// `n` rows of `n` comma-separated numbers.
    DenseCsv,
    /// Lines `i<TAB>j<TAB>w` with 0-based node ids.
    EdgeListTsv,
}

impl MatrixFormat {
    /// `.tsv` files are edge lists, everything else dense CSV.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => MatrixFormat::EdgeListTsv,
            _ => MatrixFormat::DenseCsv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Missing {
    /// Absent off-diagonal pairs are an error.
    Error,
    /// Absent pairs are zero.
    Zero,
}

pub fn read_matrix(
    path: &Path,
    format: Option<MatrixFormat>,
    header: bool,
    missing: Missing,
) -> Result<SymMatrix, CliError> {
    match format.unwrap_or_else(|| MatrixFormat::infer(path)) {
        MatrixFormat::DenseCsv => read_dense(path, header),
        MatrixFormat::EdgeListTsv => read_edge_list(path, missing),
    }
}

fn read_dense(path: &Path, header: bool) -> Result<SymMatrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Arg(format!(
                    "{}: row {r}, column {c}: {cell:?} is not a finite number",
                    path.display()
                ))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(CliError::Arg(format!("{}: no rows", path.display())));
    }
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != n) {
        return Err(CliError::Arg(format!(
            "{}: row {r} has {} values but the matrix has {n} rows",
            path.display(),
            row.len()
        )));
    }
    let data = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    Ok(SymMatrix::from_nearly_symmetric(data, LOAD_SYMMETRY)?)
}

fn read_edge_list(path: &Path, missing: Missing) -> Result<SymMatrix, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))?;
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| CliError::Arg(format!("{}: line {}: {what}", path.display(), line_no + 1));
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad("expected i<TAB>j<TAB>w"));
        }
        let i: usize = fields[0].parse().map_err(|_| bad("node id is not a non-negative integer"))?;
        let j: usize = fields[1].parse().map_err(|_| bad("node id is not a non-negative integer"))?;
        let w: f64 = fields[2].parse().ok().filter(|w: &f64| w.is_finite()).ok_or_else(|| bad("weight is not a finite number"))?;
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(bad("pair listed more than once"));
        }
        edges.push((i, j, w));
    }
    let n = edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
    if n == 0 {
        return Err(CliError::Arg(format!("{}: no edges", path.display())));
    }
    let off_diagonal = seen.iter().filter(|(i, j)| i != j).count();
    if missing == Missing::Error && off_diagonal < n * (n - 1) / 2 {
        return Err(CliError::Arg(format!(
            "{}: {} of {} node pairs are absent (use --missing zero to fill them with 0)",
            path.display(),
            n * (n - 1) / 2 - off_diagonal,
            n * (n - 1) / 2
        )));
    }
    let mut data = DMatrix::zeros(n, n);
    for (i, j, w) in edges {
        data[(i, j)] = w;
        data[(j, i)] = w;
    }
    Ok(SymMatrix::new(data)?)
}

/// Headerless CSV, one matrix row per line, shortest round-trip number formatting.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    write_rows(path, None, (0..m.nrows()).map(|i| m.row(i).iter().map(|&v| format_value(v)).collect()))
}

pub fn write_rows(
    path: &Path,
    header: Option<Vec<String>>,
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Arg(format!("{}: {e}", path.display()));
    if let Some(h) = header {
        w.write_record(h).map_err(io)?;
    }
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Option-valued matrix with absent entries as empty cells.
pub fn write_partial_matrix(path: &Path, m: &DMatrix<Option<f64>>) -> Result<(), CliError> {
    let rows = (0..m.nrows()).map(|i| {
        (0..m.ncols())
            .map(|j| m[(i, j)].map_or_else(String::new, format_value))
            .collect()
    });
    write_rows(path, None, rows)
}

/// `{"labels": [...]}` with 1-based block labels.
#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsFile {
    pub labels: Vec<usize>,
}

pub fn read_labels(path: &Path) -> Result<Membership, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))?;
    let file: LabelsFile =
        serde_json::from_str(&text).map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))?;
    let k = file.labels.iter().copied().max().unwrap_or(0);
    Ok(Membership::from_one_based(&file.labels, k)?)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Arg(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))
}
