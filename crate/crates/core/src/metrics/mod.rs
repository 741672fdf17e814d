//! Objective metrics: LSD on waveforms, Fréchet distance, paired KL and
//! inception score on externally extracted embedding/probability files.

mod embed;
mod evaluate;
mod gaussian;
mod lsd;
mod prob;

use std::path::PathBuf;

use thiserror::Error;

use crate::audio::AudioError;
use crate::dataset::DatasetError;

pub use embed::{EmbeddingHeader, EmbeddingSet};
pub use evaluate::{evaluate_dataset, EvalConfig, EvalReport, MetricRow};
pub use gaussian::{frechet_distance, gaussian_stats, sqrtm_psd, GaussianStats, NEGATIVE_EIGEN_TOLERANCE};
pub use lsd::{lsd, lsd_spectrograms, DEFAULT_LSD_EPS};
pub use prob::{inception_score, paired_kl, ProbMatrix, DEFAULT_KL_EPS};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("covariance is not symmetric")]
    NotSymmetric,
    #[error("{rows} rows, at least {needed} required")]
    TooFewRows { rows: usize, needed: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("eigendecomposition failed to converge")]
    Eigen,
    #[error("eigenvalue {0} is below the negative tolerance")]
    NegativeEigenvalue(f64),
    #[error("invalid probability matrix: {0}")]
    InvalidProbabilities(String),
    #[error("{splits} splits requested for {rows} rows")]
    Splits { splits: usize, rows: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
