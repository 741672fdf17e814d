use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{EmbeddingSet, MetricsError};

/// Eigenvalues below this are treated as a broken (non-PSD) input.
pub const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        let d = mean.len();
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(MetricsError::Shape(format!("mean of length {d} with a non-{d}x{d} covariance")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        if (&cov - cov.transpose()).amax() > 1e-9 {
            return Err(MetricsError::NotSymmetric);
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
        })
    }
}

/// Column means and unbiased (N−1) covariance, symmetrized.
pub fn gaussian_stats(set: &EmbeddingSet) -> Result<GaussianStats, MetricsError> {
    let (n, d) = (set.rows(), set.cols());
    if n < 2 {
        return Err(MetricsError::TooFewRows { rows: n, needed: 2 });
    }
    let m = set.matrix();
    let mean = DVector::from_fn(d, |j, _| m.column(j).sum() / n as f64);
    let mut centered = m.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats { mean, cov })
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Eigenvalues in `[-tol, 0)` are clamped to zero; anything lower is an error.
pub fn sqrtm_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    if !s.is_square() {
        return Err(MetricsError::Shape(format!("{}x{} is not square", s.nrows(), s.ncols())));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or(MetricsError::Eigen)?;
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -NEGATIVE_EIGEN_TOLERANCE {
            return Err(MetricsError::NegativeEigenvalue(*v));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Fréchet distance between two Gaussians:
/// `|μa − μb|² + tr(Σa + Σb − 2 (Σa Σb)^½)`, with the trace of the product
/// root taken as `tr sqrtm(√Σa Σb √Σa)`. Clamped at zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::Shape(format!("dimensions {} and {}", a.dim(), b.dim())));
    }
    let root_a = sqrtm_psd(&a.cov)?;
    let inner = &root_a * &b.cov * &root_a;
    let cross = sqrtm_psd(&inner)?.trace();
    let diff = &a.mean - &b.mean;
    let fd = diff.dot(&diff) + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(fd.max(0.0))
}
