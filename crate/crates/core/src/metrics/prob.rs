use nalgebra::DMatrix;

use super::{EmbeddingSet, MetricsError};

pub const DEFAULT_KL_EPS: f64 = 1e-10;
const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// N×K matrix whose rows are probability distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix(DMatrix<f64>);

impl ProbMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, MetricsError> {
        for (i, row) in m.row_iter().enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(MetricsError::InvalidProbabilities(format!("row {i} has a negative or non-finite entry")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(MetricsError::InvalidProbabilities(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MetricsError> {
        let k = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != k) {
            return Err(MetricsError::Shape("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    pub fn from_set(set: &EmbeddingSet) -> Result<Self, MetricsError> {
        Self::new(set.matrix().clone())
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `Σ_k p_k ln((p_k + ε)/(q_k + ε))`, with zero-probability terms contributing 0.
fn kl_row<'a>(p: impl Iterator<Item = &'a f64>, q: impl Iterator<Item = &'a f64>, eps: f64) -> f64 {
    p.zip(q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * ((p + eps) / (q + eps)).ln())
        .sum()
}

/// Mean KL(reference row ‖ generated row) over paired rows, natural log.
pub fn paired_kl(reference: &ProbMatrix, generated: &ProbMatrix, eps: f64) -> Result<f64, MetricsError> {
    if reference.rows() != generated.rows() || reference.cols() != generated.cols() {
        return Err(MetricsError::Shape(format!(
            "{}x{} vs {}x{}",
            reference.rows(),
            reference.cols(),
            generated.rows(),
            generated.cols()
        )));
    }
    if reference.rows() == 0 {
        return Err(MetricsError::TooFewRows { rows: 0, needed: 1 });
    }
    let total: f64 = reference
        .0
        .row_iter()
        .zip(generated.0.row_iter())
        .map(|(p, q)| kl_row(p.iter(), q.iter(), eps))
        .sum();
    Ok(total / reference.rows() as f64)
}

/// Inception score over `n_splits` contiguous splits (sizes differ by at
/// most one row). Returns the mean and population standard deviation.
pub fn inception_score(p: &ProbMatrix, n_splits: usize, eps: f64) -> Result<(f64, f64), MetricsError> {
    let n = p.rows();
    if n_splits == 0 || n_splits > n {
        return Err(MetricsError::Splits { splits: n_splits, rows: n });
    }
    let mut scores = Vec::with_capacity(n_splits);
    let mut start = 0;
    for s in 0..n_splits {
        let len = n / n_splits + usize::from(s < n % n_splits);
        let part = p.0.rows(start, len);
        start += len;
        let marginal: Vec<f64> = part.column_iter().map(|c| c.sum() / len as f64).collect();
        let mean_kl = part
            .row_iter()
            .map(|row| kl_row(row.iter(), marginal.iter(), eps))
            .sum::<f64>()
            / len as f64;
        scores.push(mean_kl.exp());
    }
    let mean = scores.iter().sum::<f64>() / n_splits as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n_splits as f64;
    Ok((mean, var.sqrt()))
}
