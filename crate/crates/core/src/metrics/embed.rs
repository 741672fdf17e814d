use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Sidecar header of an embedding file pair `<name>.json` + `<name>.f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub ids: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
}

/// N×D matrix of finite values with one id per row. The tag names the
/// extractor that produced it and is otherwise opaque.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    matrix: DMatrix<f64>,
    tag: String,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, matrix: DMatrix<f64>, tag: impl Into<String>) -> Result<Self, MetricsError> {
        if ids.len() != matrix.nrows() {
            return Err(MetricsError::Shape(format!("{} ids for {} rows", ids.len(), matrix.nrows())));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        Ok(Self {
            ids,
            matrix,
            tag: tag.into(),
        })
    }

    /// Rows get ids "0", "1", ...
    pub fn from_rows(rows: Vec<Vec<f64>>, tag: impl Into<String>) -> Result<Self, MetricsError> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(MetricsError::Shape("ragged rows".into()));
        }
        let matrix = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::new((0..n).map(|i| i.to_string()).collect(), matrix, tag)
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Rows for `ids` in the given order; `None` if any id is absent.
    pub fn select(&self, ids: &[&str]) -> Option<EmbeddingSet> {
        let index: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let rows: Vec<usize> = ids.iter().map(|id| index.get(id).copied()).collect::<Option<_>>()?;
        Some(EmbeddingSet {
            ids: ids.iter().map(|s| s.to_string()).collect(),
            matrix: self.matrix.select_rows(&rows),
            tag: self.tag.clone(),
        })
    }

    fn paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
        (dir.join(format!("{name}.json")), dir.join(format!("{name}.f32")))
    }

    pub fn exists(dir: impl AsRef<Path>, name: &str) -> bool {
        let (h, b) = Self::paths(dir.as_ref(), name);
        h.is_file() && b.is_file()
    }

    pub fn load(dir: impl AsRef<Path>, name: &str) -> Result<Self, MetricsError> {
        let (hpath, bpath) = Self::paths(dir.as_ref(), name);
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |source| MetricsError::Io { path: p.clone(), source }
        };
        let header: EmbeddingHeader = serde_json::from_slice(&std::fs::read(&hpath).map_err(io(&hpath))?)
            .map_err(|e| MetricsError::Format { path: hpath.clone(), reason: e.to_string() })?;
        if header.dtype != "f32le" {
            return Err(MetricsError::Format { path: hpath, reason: format!("dtype '{}' unsupported", header.dtype) });
        }
        if header.ids.len() != header.rows {
            return Err(MetricsError::Format { path: hpath, reason: "ids and rows disagree".into() });
        }
        let bytes = std::fs::read(&bpath).map_err(io(&bpath))?;
        if bytes.len() != header.rows * header.cols * 4 {
            return Err(MetricsError::Format {
                path: bpath,
                reason: format!("{} bytes for {}x{} f32 values", bytes.len(), header.rows, header.cols),
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let matrix = DMatrix::from_row_slice(header.rows, header.cols, &values);
        Self::new(header.ids, matrix, name)
    }

    /// Writes the pair of files; values are stored as f32.
    pub fn save(&self, dir: impl AsRef<Path>, name: &str) -> Result<(), MetricsError> {
        let (hpath, bpath) = Self::paths(dir.as_ref(), name);
        let header = EmbeddingHeader {
            ids: self.ids.clone(),
            rows: self.rows(),
            cols: self.cols(),
            dtype: "f32le".into(),
        };
        std::fs::write(&hpath, serde_json::to_vec(&header).expect("header serializes"))
            .map_err(|source| MetricsError::Io { path: hpath, source })?;
        let mut bytes = Vec::with_capacity(self.rows() * self.cols() * 4);
        for row in self.matrix.row_iter() {
            for x in row.iter() {
                bytes.extend((*x as f32).to_le_bytes());
            }
        }
        std::fs::write(&bpath, bytes).map_err(|source| MetricsError::Io { path: bpath, source })
    }
}
