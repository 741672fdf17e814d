//! Diffusion training and sampling kernels on abstract latents: forward
//! noising, velocity targets and their inversion, channel concatenation,
//! guidance, deterministic DDIM, and an analytic Gaussian denoiser used as
//! an exact oracle.

mod check;
mod kernels;
mod sample;
mod schedule;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use check::{run_checks, write_fixture, CheckReport, CheckResult, Perturbation, FIXTURE_NAMES};
pub use kernels::{cfg_combine, ddim_step, diffusion_loss, forward_diffuse, recover_from_velocity, velocity_target};
pub use sample::{
    sample, uniform_ladder, validate_ladder, Denoiser, GuidanceConfig, LinearGaussianDenoiser, Masking, PriorMean,
};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleKind, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("timestep {t} outside 0..={steps}")]
    Timestep { t: usize, steps: usize },
    #[error("t_prev {t_prev} must be below t {t}")]
    StepOrder { t: usize, t_prev: usize },
    #[error("invalid step ladder: {0}")]
    Ladder(String),
    #[error("invalid guidance scale {0}")]
    Guidance(f64),
    #[error("non-finite latent value")]
    NonFinite,
    #[error("denoiser failed: {0}")]
    Denoiser(String),
    #[error("fixture: {0}")]
    Fixture(String),
}

/// C×L grid of reals (channels × frames).
#[derive(Debug, Clone, PartialEq)]
pub struct Latent(DMatrix<f64>);

impl Latent {
    pub fn new(data: DMatrix<f64>) -> Result<Self, DiffusionError> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(DiffusionError::Shape(format!("{}x{} latent", data.nrows(), data.ncols())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(DiffusionError::NonFinite);
        }
        Ok(Self(data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DiffusionError> {
        let l = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != l) {
            return Err(DiffusionError::Shape("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), l, |i, j| rows[i][j]))
    }

    pub fn zeros(channels: usize, frames: usize) -> Self {
        assert!(channels > 0 && frames > 0, "latent dimensions must be positive");
        Self(DMatrix::zeros(channels, frames))
    }

    pub fn channels(&self) -> usize {
        self.0.nrows()
    }

    pub fn frames(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub(crate) fn same_shape(&self, other: &Latent, what: &str) -> Result<(), DiffusionError> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(DiffusionError::Shape(format!("{what}: {:?} vs {:?}", self.shape(), other.shape())))
        }
    }

    /// `x·self + y·other`, elementwise. Callers check shapes.
    pub(crate) fn axpby(&self, x: f64, other: &Latent, y: f64) -> Latent {
        Latent(self.0.zip_map(&other.0, |p, q| x * p + y * q))
    }

    pub fn max_abs_diff(&self, other: &Latent) -> f64 {
        self.0.zip_fold(&other.0, 0.0, |acc, p, q| acc.max((p - q).abs()))
    }
}

/// Stacks `z_t` (channels `0..C`) over `z_in` (channels `C..2C`).
pub fn concat_channels(z_t: &Latent, z_in: &Latent) -> Result<Latent, DiffusionError> {
    z_t.same_shape(z_in, "concat_channels")?;
    let (c, l) = z_t.shape();
    let mut out = DMatrix::zeros(2 * c, l);
    out.rows_mut(0, c).copy_from(&z_t.0);
    out.rows_mut(c, c).copy_from(&z_in.0);
    Ok(Latent(out))
}

/// Inverse of [`concat_channels`].
pub fn split_channels(z_tilde: &Latent) -> Result<(Latent, Latent), DiffusionError> {
    let (c2, _) = z_tilde.shape();
    if c2 % 2 != 0 {
        return Err(DiffusionError::Shape(format!("{c2} channels cannot be split in half")));
    }
    let c = c2 / 2;
    Ok((Latent(z_tilde.0.rows(0, c).into_owned()), Latent(z_tilde.0.rows(c, c).into_owned())))
}

/// Token sequence `H` (L_q × D_q) with its pooled summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub h: DMatrix<f64>,
    pub c_global: DVector<f64>,
}

impl Conditioning {
    pub fn new(h: DMatrix<f64>) -> Result<Self, DiffusionError> {
        let c_global = pool_global(&h)?;
        Ok(Self { h, c_global })
    }
}

/// Mean over the sequence dimension.
pub fn pool_global(h: &DMatrix<f64>) -> Result<DVector<f64>, DiffusionError> {
    if h.nrows() == 0 {
        return Err(DiffusionError::Shape("empty conditioning sequence".into()));
    }
    Ok(DVector::from_fn(h.ncols(), |j, _| h.column(j).sum() / h.nrows() as f64))
}
