//! File ingestion: dense CSV matrices/vectors and the sparse
//! `label index:value index:value ...` classification format (1-based
//! indices, whitespace separated).

use crate::linalg::{DenseMatrix, SparseVec};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("empty file: {0}")]
    Empty(PathBuf),
}

fn read(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse { path: path.to_path_buf(), line: line + 1, message: message.into() }
}

/// One matrix row per line, comma-separated decimals.
pub fn load_dense_matrix(path: &Path) -> Result<DenseMatrix, DataError> {
    let text = read(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t}")))
            .collect();
        let row = row.map_err(|m| parse_err(path, i, m))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    i,
                    format!("row has {} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty(path.to_path_buf()));
    }
    Ok(DenseMatrix::from_rows(&rows))
}

/// Single-column CSV (one decimal per line; a trailing comma-separated row is
/// also accepted for convenience).
pub fn load_vector(path: &Path) -> Result<Vec<f64>, DataError> {
    let m = load_dense_matrix(path)?;
    if m.cols() == 1 || m.rows() == 1 {
        Ok(m.data().to_vec())
    } else {
        Err(DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected a vector, got a {}x{} matrix", m.rows(), m.cols()),
        })
    }
}

/// Sparse classification data: `label idx:val idx:val ...` per line with
/// 1-based feature indices. The feature dimension is the largest index seen.
pub fn load_sparse_classification(path: &Path) -> Result<Vec<(SparseVec, f64)>, DataError> {
    let text = read(path)?;
    let mut raw: Vec<(f64, Vec<(u32, f64)>)> = Vec::new();
    let mut dim = 0u32;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label: f64 = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| parse_err(path, i, "label is not a number"))?;
        if label != 1.0 && label != -1.0 {
            return Err(parse_err(path, i, format!("label must be -1 or +1, got {label}")));
        }
        let mut entries = Vec::new();
        for tok in parts {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(path, i, format!("expected idx:val, got {tok}")))?;
            let idx: u32 = idx
                .parse()
                .map_err(|_| parse_err(path, i, format!("bad index: {idx}")))?;
            if idx == 0 {
                return Err(parse_err(path, i, "indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(path, i, format!("bad value: {val}")))?;
            entries.push((idx - 1, val));
            dim = dim.max(idx);
        }
        entries.sort_by_key(|&(i, _)| i);
        raw.push((label, entries));
    }
    if raw.is_empty() {
        return Err(DataError::Empty(path.to_path_buf()));
    }
    Ok(raw
        .into_iter()
        .map(|(label, entries)| {
            let (indices, values) = entries.into_iter().unzip();
            (SparseVec::new(dim as usize, indices, values), label)
        })
        .collect())
}
