//! Manifest, CSV matrix and label file handling.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MANIFEST_VERSION: &str = "mvembed-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub name: String,
    /// CSV path, relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    /// Feature count.
    pub rows: usize,
    /// Sample count.
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub views: Vec<ViewEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<serde_json::Value>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            field: "manifest".into(),
            message: e.to_string(),
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Load {
                path: path.to_path_buf(),
                field: "version".into(),
                message: format!("expected `{MANIFEST_VERSION}`, found `{}`", manifest.version),
            });
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_text(path, &text)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(text.as_bytes()).map_err(io_err)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a features × samples CSV matrix.
pub fn read_csv_matrix(path: &Path) -> Result<Matrix> {
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(j, cell)| {
                cell.trim().parse::<f64>().map_err(|_| Error::Load {
                    path: path.to_path_buf(),
                    field: format!("row {} column {}", i + 1, j + 1),
                    message: format!("`{}` is not a number", cell.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::RaggedCsv {
                    path: path.to_path_buf(),
                    row: rows.len() + 1,
                    found: row.len(),
                    expected: first.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Load {
            path: path.to_path_buf(),
            field: "matrix".into(),
            message: "file holds no rows".into(),
        });
    }
    let cols = rows[0].len();
    Ok(Matrix::from_row_iterator(
        rows.len(),
        cols,
        rows.into_iter().flatten(),
    ))
}

/// Writes a matrix as CSV, one row per line, shortest round-trip decimals.
pub fn write_csv_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut text = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

pub(crate) fn format_f64(v: f64) -> String {
    // `Display` for f64 prints the shortest string that parses back exactly.
    format!("{v}")
}

/// Reads integer labels, one per line, and remaps them onto `1..=C` in
/// ascending order of value. Returns the contiguous labels and the original
/// value of each class.
pub fn read_labels(path: &Path) -> Result<(Vec<usize>, Vec<i64>)> {
    let text = read_text(path)?;
    let mut raw = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        raw.push(t.parse::<i64>().map_err(|_| Error::BadLabel {
            path: path.to_path_buf(),
            line: i + 1,
            value: t.to_string(),
        })?);
    }
    let mut values = raw.clone();
    values.sort_unstable();
    values.dedup();
    let labels = raw
        .iter()
        .map(|v| values.binary_search(v).expect("value present") + 1)
        .collect();
    Ok((labels, values))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    write_text(path, &text)
}

/// Loads every view and the optional labels named by a manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut views = Vec::with_capacity(manifest.views.len());
    let mut names = Vec::with_capacity(manifest.views.len());
    for (v, entry) in manifest.views.iter().enumerate() {
        let path = resolve(base, &entry.path);
        let m = read_csv_matrix(&path)?;
        if m.shape() != (entry.rows, entry.cols) {
            return Err(Error::Load {
                path: manifest_path.to_path_buf(),
                field: format!("views[{v}] `{}`", entry.name),
                message: format!(
                    "declared {}x{} but {} holds {}x{}",
                    entry.rows,
                    entry.cols,
                    path.display(),
                    m.nrows(),
                    m.ncols()
                ),
            });
        }
        views.push(m);
        names.push(entry.name.clone());
    }
    let (labels, values) = match &manifest.labels_path {
        Some(p) => {
            let path = resolve(base, p);
            let (labels, values) = read_labels(&path)?;
            let n = views.first().map_or(0, |m| m.ncols());
            if labels.len() != n {
                return Err(Error::Load {
                    path,
                    field: "labels".into(),
                    message: format!("{} labels for {n} samples", labels.len()),
                });
            }
            (Some(labels), Some(values))
        }
        None => (None, None),
    };
    let data = Dataset::with_names(views, labels, names).map_err(|e| match e {
        Error::InvalidInput(message) => Error::Load {
            path: manifest_path.to_path_buf(),
            field: "views".into(),
            message,
        },
        other => other,
    })?;
    Ok(match values {
        Some(v) => data.with_label_values(v),
        None => data,
    })
}
