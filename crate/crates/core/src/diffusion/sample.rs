use serde::{Deserialize, Serialize};

use super::{cfg_combine, concat_channels, ddim_step, split_channels, Conditioning, DiffusionError, Latent, NoiseSchedule};

/// Velocity predictor seam. Implementations must be deterministic and safe
/// to call concurrently.
pub trait Denoiser: Send + Sync {
    /// `z_tilde` is the 2C×L concatenation of the noisy latent and the
    /// source latent; returns a C×L velocity.
    fn predict(&self, z_tilde: &Latent, t: usize, cond: Option<&Conditioning>) -> Result<Latent, DiffusionError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Masking {
    /// Unconditional branch drops the instruction and zeroes the source latent.
    MaskAudio,
    /// Unconditional branch drops only the instruction.
    #[default]
    NoMaskAudio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub w: f64,
    pub masking: Masking,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            w: 5.0,
            masking: Masking::NoMaskAudio,
        }
    }
}

/// `n` uniformly spaced steps from `T` down to 0 (n + 1 entries).
pub fn uniform_ladder(steps: usize, n: usize) -> Result<Vec<usize>, DiffusionError> {
    if n == 0 || n > steps {
        return Err(DiffusionError::Ladder(format!("{n} sampling steps for T = {steps}")));
    }
    let mut ladder: Vec<usize> = (0..=n).map(|k| ((steps * (n - k)) as f64 / n as f64).round() as usize).collect();
    ladder.dedup();
    Ok(ladder)
}

pub fn validate_ladder(ladder: &[usize], sched: &NoiseSchedule) -> Result<(), DiffusionError> {
    if ladder.len() < 2 {
        return Err(DiffusionError::Ladder("need at least two entries".into()));
    }
    if ladder.last() != Some(&0) {
        return Err(DiffusionError::Ladder("must end at 0".into()));
    }
    if ladder[0] > sched.steps() {
        return Err(DiffusionError::Ladder(format!("starts at {} beyond T = {}", ladder[0], sched.steps())));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DiffusionError::Ladder("must be strictly decreasing".into()));
    }
    Ok(())
}

/// Guided deterministic DDIM from `z_T_init` down the ladder, returning the
/// final `ẑ0`. Endpoint guidance scales skip the branch they do not need.
pub fn sample(
    denoiser: &dyn Denoiser,
    z_in: &Latent,
    cond: Option<&Conditioning>,
    sched: &NoiseSchedule,
    ladder: &[usize],
    guidance: &GuidanceConfig,
    z_t_init: &Latent,
) -> Result<Latent, DiffusionError> {
    validate_ladder(ladder, sched)?;
    z_in.same_shape(z_t_init, "sample")?;
    if !(guidance.w.is_finite() && guidance.w >= 0.0) {
        return Err(DiffusionError::Guidance(guidance.w));
    }
    let masked_source = Latent::zeros(z_in.channels(), z_in.frames());
    let uncond_source = match guidance.masking {
        Masking::MaskAudio => &masked_source,
        Masking::NoMaskAudio => z_in,
    };
    let checked = |v: Latent| -> Result<Latent, DiffusionError> {
        if v.shape() != z_in.shape() {
            return Err(DiffusionError::Shape(format!(
                "denoiser returned {:?}, expected {:?}",
                v.shape(),
                z_in.shape()
            )));
        }
        Ok(v)
    };

    let mut z = z_t_init.clone();
    for pair in ladder.windows(2) {
        let (t, t_prev) = (pair[0], pair[1]);
        let v = if guidance.w == 1.0 {
            checked(denoiser.predict(&concat_channels(&z, z_in)?, t, cond)?)?
        } else if guidance.w == 0.0 {
            checked(denoiser.predict(&concat_channels(&z, uncond_source)?, t, None)?)?
        } else {
            let v_cond = checked(denoiser.predict(&concat_channels(&z, z_in)?, t, cond)?)?;
            let v_uncond = checked(denoiser.predict(&concat_channels(&z, uncond_source)?, t, None)?)?;
            cfg_combine(&v_uncond, &v_cond, guidance.w)?
        };
        z = ddim_step(&z, &v, t, t_prev, sched)?;
    }
    Ok(z)
}

/// Where the Gaussian prior mean of the analytic denoiser comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorMean {
    Fixed(Latent),
    /// Use the source-latent channels of the denoiser input, so masking the
    /// source changes the unconditional prediction.
    Source,
}

/// Exact minimum-MSE velocity for an elementwise Gaussian prior
/// `z0 ~ N(μ, s²)`: with `a = √ᾱ`, `b = √(1−ᾱ)`, `σ² = a²s² + b²`,
/// `E[z0|z_t] = μ + a s²/σ² (z_t − aμ)` and `E[ε|z_t] = b/σ² (z_t − aμ)`.
/// `cond` shifts the mean by `shift · c_global[0]` when present.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianDenoiser {
    pub sched: NoiseSchedule,
    pub mean: PriorMean,
    pub std: f64,
    pub shift: f64,
}

impl LinearGaussianDenoiser {
    pub fn new(sched: NoiseSchedule, mean: PriorMean, std: f64) -> Self {
        Self {
            sched,
            mean,
            std,
            shift: 0.0,
        }
    }

    fn prior_mean(&self, source: &Latent, cond: Option<&Conditioning>) -> Latent {
        let base = match &self.mean {
            PriorMean::Fixed(m) => m.clone(),
            PriorMean::Source => source.clone(),
        };
        match cond {
            Some(c) if self.shift != 0.0 && !c.c_global.is_empty() => {
                let delta = self.shift * c.c_global[0];
                Latent(base.matrix().map(|x| x + delta))
            }
            _ => base,
        }
    }

    /// `E[z0 | z_t]` for this prior.
    pub fn posterior_mean(&self, z_t: &Latent, t: usize, mu: &Latent) -> Result<Latent, DiffusionError> {
        let (a, b) = self.sched.coefficients(t)?;
        let s2 = self.std * self.std;
        let k = a * s2 / (a * a * s2 + b * b);
        Ok(Latent(mu.matrix().zip_map(z_t.matrix(), |m, z| m + k * (z - a * m))))
    }
}

impl Denoiser for LinearGaussianDenoiser {
    fn predict(&self, z_tilde: &Latent, t: usize, cond: Option<&Conditioning>) -> Result<Latent, DiffusionError> {
        let (z_t, source) = split_channels(z_tilde)?;
        let mu = self.prior_mean(&source, cond);
        z_t.same_shape(&mu, "prior mean")?;
        let (a, b) = self.sched.coefficients(t)?;
        let s2 = self.std * self.std;
        let var = a * a * s2 + b * b;
        let (k0, ke) = (a * s2 / var, b / var);
        Ok(Latent(mu.matrix().zip_map(z_t.matrix(), |m, z| {
            let u = z - a * m;
            a * (ke * u) - b * (m + k0 * u)
        })))
    }
}
