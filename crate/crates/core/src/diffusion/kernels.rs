use super::{DiffusionError, Latent, NoiseSchedule};

/// `z_t = √ᾱ_t z0 + √(1−ᾱ_t) ε`. `t = 0` is accepted and returns `z0`.
pub fn forward_diffuse(z0: &Latent, eps: &Latent, t: usize, sched: &NoiseSchedule) -> Result<Latent, DiffusionError> {
    z0.same_shape(eps, "forward_diffuse")?;
    let (a, b) = sched.coefficients(t)?;
    Ok(z0.axpby(a, eps, b))
}

/// `v = √ᾱ_t ε − √(1−ᾱ_t) z0`.
pub fn velocity_target(z0: &Latent, eps: &Latent, t: usize, sched: &NoiseSchedule) -> Result<Latent, DiffusionError> {
    z0.same_shape(eps, "velocity_target")?;
    let (a, b) = sched.coefficients(t)?;
    Ok(eps.axpby(a, z0, -b))
}

/// Inverts the forward and velocity equations:
/// `ẑ0 = √ᾱ z_t − √(1−ᾱ) v`, `ε̂ = √(1−ᾱ) z_t + √ᾱ v`.
pub fn recover_from_velocity(
    z_t: &Latent,
    v: &Latent,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<(Latent, Latent), DiffusionError> {
    z_t.same_shape(v, "recover_from_velocity")?;
    let (a, b) = sched.coefficients(t)?;
    Ok((z_t.axpby(a, v, -b), z_t.axpby(b, v, a)))
}

/// Mean squared error over all entries.
pub fn diffusion_loss(v_pred: &Latent, v_target: &Latent) -> Result<f64, DiffusionError> {
    v_pred.same_shape(v_target, "diffusion_loss")?;
    let n = v_pred.matrix().len() as f64;
    Ok(v_pred.matrix().zip_fold(v_target.matrix(), 0.0, |acc, p, q| acc + (p - q).powi(2)) / n)
}

/// `uncond + w (cond − uncond)`. The scale endpoints return the matching
/// input unchanged so `w = 0` and `w = 1` reduce bit-exactly.
pub fn cfg_combine(uncond: &Latent, cond: &Latent, w: f64) -> Result<Latent, DiffusionError> {
    uncond.same_shape(cond, "cfg_combine")?;
    if !(w.is_finite() && w >= 0.0) {
        return Err(DiffusionError::Guidance(w));
    }
    Ok(if w == 0.0 {
        uncond.clone()
    } else if w == 1.0 {
        cond.clone()
    } else {
        Latent(uncond.matrix().zip_map(cond.matrix(), |u, c| u + w * (c - u)))
    })
}

/// Deterministic (η = 0) DDIM update from `t` to `t_prev`.
pub fn ddim_step(
    z_t: &Latent,
    v_pred: &Latent,
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
) -> Result<Latent, DiffusionError> {
    if t_prev >= t {
        return Err(DiffusionError::StepOrder { t, t_prev });
    }
    let (z0_hat, eps_hat) = recover_from_velocity(z_t, v_pred, t, sched)?;
    let (a, b) = sched.coefficients(t_prev)?;
    Ok(z0_hat.axpby(a, &eps_hat, b))
}
