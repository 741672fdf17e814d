use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    cfg_combine, concat_channels, ddim_step, diffusion_loss, forward_diffuse, make_schedule, pool_global,
    recover_from_velocity, sample, split_channels, uniform_ladder, velocity_target, Conditioning, Denoiser,
    DiffusionError, GuidanceConfig, Latent, LinearGaussianDenoiser, Masking, NoiseSchedule, PriorMean, ScheduleKind,
};
use crate::metrics::EmbeddingSet;

pub const FIXTURE_NAMES: [&str; 4] = ["z0", "eps", "zt", "v"];
const FIXTURE_META: &str = "fixture.json";
/// Fixtures are stored as f32, so comparisons against them use this bound.
const FIXTURE_TOLERANCE: f64 = 1e-5;
const ORACLE_SEEDS: u64 = 100;

/// Kernel whose output the harness corrupts, for exercising failure paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    Forward,
    Velocity,
    Recover,
    Guidance,
    Ddim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub perturbation: Option<Perturbation>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl CheckReport {
    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureMeta {
    t: usize,
    steps: usize,
    beta_start: f64,
    beta_end: f64,
}

/// Kernel calls routed through an optional perturbation.
struct Harness {
    perturb: Option<Perturbation>,
}

const PERTURBATION: f64 = 1e-3;

impl Harness {
    fn bump(&self, which: Perturbation, z: Latent) -> Latent {
        if self.perturb == Some(which) {
            let mut m = z.into_matrix();
            m[(0, 0)] += PERTURBATION;
            Latent(m)
        } else {
            z
        }
    }

    fn forward(&self, z0: &Latent, eps: &Latent, t: usize, s: &NoiseSchedule) -> Result<Latent, DiffusionError> {
        Ok(self.bump(Perturbation::Forward, forward_diffuse(z0, eps, t, s)?))
    }

    fn velocity(&self, z0: &Latent, eps: &Latent, t: usize, s: &NoiseSchedule) -> Result<Latent, DiffusionError> {
        Ok(self.bump(Perturbation::Velocity, velocity_target(z0, eps, t, s)?))
    }

    fn recover(&self, zt: &Latent, v: &Latent, t: usize, s: &NoiseSchedule) -> Result<(Latent, Latent), DiffusionError> {
        let (z0, eps) = recover_from_velocity(zt, v, t, s)?;
        Ok((self.bump(Perturbation::Recover, z0), eps))
    }

    fn cfg(&self, u: &Latent, c: &Latent, w: f64) -> Result<Latent, DiffusionError> {
        Ok(self.bump(Perturbation::Guidance, cfg_combine(u, c, w)?))
    }

    fn ddim(&self, zt: &Latent, v: &Latent, t: usize, tp: usize, s: &NoiseSchedule) -> Result<Latent, DiffusionError> {
        Ok(self.bump(Perturbation::Ddim, ddim_step(zt, v, t, tp, s)?))
    }
}

fn random(rng: &mut ChaCha8Rng, c: usize, l: usize, range: f64) -> Latent {
    Latent(DMatrix::from_fn(c, l, |_, _| rng.gen_range(-range..range)))
}

fn result(name: &str, max_error: f64, tolerance: f64) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: max_error <= tolerance,
        max_error,
        tolerance,
    }
}

/// Denoiser that ignores its conditioning and source channels.
struct CondBlind(LinearGaussianDenoiser);

impl Denoiser for CondBlind {
    fn predict(&self, z: &Latent, t: usize, _: Option<&Conditioning>) -> Result<Latent, DiffusionError> {
        self.0.predict(z, t, None)
    }
}

/// Runs every kernel identity and the Gaussian-oracle sampling check. With
/// `fixture_dir`, stored latents are also checked against the kernels.
pub fn run_checks(seed: u64, perturb: Option<Perturbation>, fixture_dir: Option<&Path>) -> Result<CheckReport, DiffusionError> {
    let h = Harness { perturb };
    let sched = NoiseSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let s1 = make_schedule(2, 0.1, 0.2, ScheduleKind::Linear)?;
    checks.push(result("schedule_hand_product", (s1.alpha_bar()[2] - 0.72).abs(), 1e-15));
    let increase = sched.alpha_bar().windows(2).map(|w| (w[1] - w[0]).max(0.0)).fold(0.0, f64::max);
    let strictly = sched.alpha_bar().windows(2).all(|w| w[1] < w[0]);
    checks.push(result("schedule_monotone", if strictly { 0.0 } else { increase.max(f64::MIN_POSITIVE) }, 0.0));

    // (z0, ε) → (z_t, v) → (ẑ0, ε̂) at every t
    let (z0, eps) = (random(&mut rng, 4, 32, 2.0), random(&mut rng, 4, 32, 2.0));
    let mut err: f64 = 0.0;
    for t in 0..=sched.steps() {
        let zt = h.forward(&z0, &eps, t, &sched)?;
        let v = h.velocity(&z0, &eps, t, &sched)?;
        let (z0h, epsh) = h.recover(&zt, &v, t, &sched)?;
        err = err.max(z0h.max_abs_diff(&z0)).max(epsh.max_abs_diff(&eps));
    }
    checks.push(result("velocity_round_trip", err, 1e-9));

    let s64 = NoiseSchedule::from_alpha_bar(vec![1.0, 0.64])?;
    let v = h.velocity(&z0, &eps, 1, &s64)?;
    checks.push(result("velocity_closed_form", v.max_abs_diff(&eps.axpby(0.8, &z0, -0.6)), 1e-12));
    let s25 = NoiseSchedule::from_alpha_bar(vec![1.0, 0.25])?;
    let zt = h.forward(&z0, &eps, 1, &s25)?;
    checks.push(result("forward_closed_form", zt.max_abs_diff(&z0.axpby(0.5, &eps, 0.75f64.sqrt())), 1e-12));

    let (a, b) = (random(&mut rng, 3, 10, 1.0), random(&mut rng, 3, 10, 1.0));
    let (sa, sb) = split_channels(&concat_channels(&a, &b)?)?;
    checks.push(result("concat_split_exact", sa.max_abs_diff(&a).max(sb.max_abs_diff(&b)), 0.0));

    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..10 {
            acc += (a.matrix()[(i, j)] - b.matrix()[(i, j)]).powi(2);
        }
    }
    checks.push(result("loss_oracle", (diffusion_loss(&a, &b)? - acc / 30.0).abs(), 1e-12));

    let hm = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
    let pooled = pool_global(&hm)?;
    let pool_err = (0..3)
        .map(|j| (pooled[j] - (0..5).map(|i| hm[(i, j)]).sum::<f64>() / 5.0).abs())
        .fold(0.0, f64::max);
    checks.push(result("pool_global_oracle", pool_err, 1e-12));

    let (u, c) = (random(&mut rng, 4, 16, 2.0), random(&mut rng, 4, 16, 2.0));
    let p0 = h.cfg(&u, &c, 0.0)?;
    let p1 = h.cfg(&u, &c, 1.0)?;
    let mut lin: f64 = 0.0;
    for w in [0.25, 2.0, 5.0, 9.5] {
        let pw = h.cfg(&u, &c, w)?;
        lin = lin.max(pw.axpby(1.0, &p0, -1.0).max_abs_diff(&p1.axpby(w, &p0, -w)));
    }
    checks.push(result("cfg_linearity", lin, 1e-12));
    checks.push(result("cfg_endpoints_exact", p0.max_abs_diff(&u).max(p1.max_abs_diff(&c)), 0.0));

    let t = 640;
    let zt = h.forward(&z0, &eps, t, &sched)?;
    let v = h.velocity(&z0, &eps, t, &sched)?;
    let direct = h.ddim(&zt, &v, t, 0, &sched)?;
    checks.push(result("ddim_exact_to_zero", direct.max_abs_diff(&z0), 1e-9));
    let mid = h.ddim(&zt, &v, t, 200, &sched)?;
    let two = h.ddim(&mid, &h.velocity(&z0, &eps, 200, &sched)?, 200, 0, &sched)?;
    checks.push(result("ddim_ladder_consistency", two.max_abs_diff(&direct), 1e-8));

    // sampler reductions at the guidance endpoints
    let d = LinearGaussianDenoiser::new(sched.clone(), PriorMean::Source, 0.8);
    let (z_in, z_init) = (random(&mut rng, 2, 8, 1.0), random(&mut rng, 2, 8, 2.0));
    let cond = Conditioning::new(DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0)))?;
    let d_cond = LinearGaussianDenoiser { shift: 0.5, ..d.clone() };
    let ladder = uniform_ladder(1000, 50)?;
    let run = |den: &dyn Denoiser, w: f64, masking: Masking, cond: Option<&Conditioning>| {
        sample(den, &z_in, cond, &sched, &ladder, &GuidanceConfig { w, masking }, &z_init)
    };
    let manual = |den: &dyn Denoiser, conditional: bool| -> Result<Latent, DiffusionError> {
        let mut z = z_init.clone();
        let zeros = Latent::zeros(2, 8);
        for w in ladder.windows(2) {
            let v = if conditional {
                den.predict(&concat_channels(&z, &z_in)?, w[0], Some(&cond))?
            } else {
                den.predict(&concat_channels(&z, &zeros)?, w[0], None)?
            };
            z = ddim_step(&z, &v, w[0], w[1], &sched)?;
        }
        Ok(z)
    };
    let w1 = run(&d_cond, 1.0, Masking::MaskAudio, Some(&cond))?;
    checks.push(result("sample_w1_is_conditional", w1.max_abs_diff(&manual(&d_cond, true)?), 0.0));
    let w0 = run(&d_cond, 0.0, Masking::MaskAudio, Some(&cond))?;
    checks.push(result("sample_w0_is_unconditional", w0.max_abs_diff(&manual(&d_cond, false)?), 0.0));
    let blind = CondBlind(d.clone());
    let spread = [0.0, 2.5, 5.0]
        .iter()
        .map(|w| run(&blind, *w, Masking::NoMaskAudio, Some(&cond)))
        .collect::<Result<Vec<_>, _>>()?;
    let invariance = spread.iter().map(|z| z.max_abs_diff(&spread[0])).fold(0.0, f64::max);
    checks.push(result("sample_cond_blind_w_invariant", invariance, 0.0));

    checks.push(result("ddim_gaussian_oracle", gaussian_oracle_error(&h, &sched, seed)?, 1e-3));

    if let Some(dir) = fixture_dir {
        checks.push(result("fixture_consistency", fixture_error(&h, dir)?, FIXTURE_TOLERANCE));
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(CheckReport {
        seed,
        perturbation: perturb,
        checks,
        passed,
    })
}

/// Full-ladder DDIM with the analytic Gaussian denoiser against the closed
/// form of the same recursion. With `u_t = z_t − √ᾱ_t μ` and
/// `σ_t² = ᾱ_t s² + (1 − ᾱ_t)`, each exact-posterior step scales `u/σ` by
/// `ρ = (a a' s² + b b')/(σ σ')`, so `ẑ0 = μ + s Πρ (z_T − a_T μ)/σ_T`.
/// Worst case over random priors and starting points.
fn gaussian_oracle_error(h: &Harness, sched: &NoiseSchedule, seed: u64) -> Result<f64, DiffusionError> {
    let steps = sched.steps();
    let ab = sched.alpha_bar();
    let mut worst: f64 = 0.0;
    for k in 0..ORACLE_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(k));
        let mu = random(&mut rng, 2, 8, 1.0);
        let s = rng.gen_range(0.5..2.0);
        let d = LinearGaussianDenoiser::new(sched.clone(), PriorMean::Fixed(mu.clone()), s);
        let z_t = random(&mut rng, 2, 8, 3.0);
        let zeros = Latent::zeros(2, 8);
        let mut z = z_t.clone();
        for t in (1..=steps).rev() {
            let v = d.predict(&concat_channels(&z, &zeros)?, t, None)?;
            z = h.ddim(&z, &v, t, t - 1, sched)?;
        }

        let sigma = |t: usize| (ab[t] * s * s + 1.0 - ab[t]).sqrt();
        let mut factor = 1.0 / sigma(steps);
        for t in (1..=steps).rev() {
            let (a, b, a2, b2) = (ab[t].sqrt(), (1.0 - ab[t]).sqrt(), ab[t - 1].sqrt(), (1.0 - ab[t - 1]).sqrt());
            factor *= (a * a2 * s * s + b * b2) / (sigma(t) * sigma(t - 1));
        }
        let a_t = ab[steps].sqrt();
        let closed = Latent(mu.matrix().zip_map(z_t.matrix(), |m, zt| m + s * factor * (zt - a_t * m)));
        worst = worst.max(z.max_abs_diff(&closed));
    }
    Ok(worst)
}

fn latent_from_set(set: EmbeddingSet) -> Result<Latent, DiffusionError> {
    Latent::new(set.matrix().clone())
}

fn load_fixture_set(dir: &Path, name: &str) -> Result<Latent, DiffusionError> {
    let set = EmbeddingSet::load(dir, name).map_err(|e| DiffusionError::Fixture(e.to_string()))?;
    latent_from_set(set)
}

fn fixture_error(h: &Harness, dir: &Path) -> Result<f64, DiffusionError> {
    let meta_path = dir.join(FIXTURE_META);
    let meta: FixtureMeta = std::fs::read(&meta_path)
        .map_err(|e| DiffusionError::Fixture(format!("{}: {e}", meta_path.display())))
        .and_then(|b| serde_json::from_slice(&b).map_err(|e| DiffusionError::Fixture(e.to_string())))?;
    let sched = make_schedule(meta.steps, meta.beta_start, meta.beta_end, ScheduleKind::Linear)?;
    let [z0, eps, zt, v] = FIXTURE_NAMES.map(|n| load_fixture_set(dir, n));
    let (z0, eps, zt, v) = (z0?, eps?, zt?, v?);
    let zt_calc = h.forward(&z0, &eps, meta.t, &sched)?;
    let v_calc = h.velocity(&z0, &eps, meta.t, &sched)?;
    let (z0h, epsh) = h.recover(&zt, &v, meta.t, &sched)?;
    Ok(zt_calc
        .max_abs_diff(&zt)
        .max(v_calc.max_abs_diff(&v))
        .max(z0h.max_abs_diff(&z0))
        .max(epsh.max_abs_diff(&eps)))
}

/// Writes a self-consistent latent fixture (default schedule, timestep `t`).
pub fn write_fixture(dir: &Path, seed: u64, channels: usize, frames: usize, t: usize) -> Result<(), DiffusionError> {
    let sched = NoiseSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // round to f32 first so the stored values are the exact kernel inputs
    let f32r = |l: Latent| Latent(l.into_matrix().map(|x| x as f32 as f64));
    let z0 = f32r(random(&mut rng, channels, frames, 2.0));
    let eps = f32r(random(&mut rng, channels, frames, 2.0));
    let zt = forward_diffuse(&z0, &eps, t, &sched)?;
    let v = velocity_target(&z0, &eps, t, &sched)?;
    let ids: Vec<String> = (0..channels).map(|c| format!("c{c}")).collect();
    for (name, lat) in FIXTURE_NAMES.iter().zip([z0, eps, zt, v]) {
        EmbeddingSet::new(ids.clone(), lat.into_matrix(), *name)
            .and_then(|s| s.save(dir, name))
            .map_err(|e| DiffusionError::Fixture(e.to_string()))?;
    }
    let meta = FixtureMeta {
        t,
        steps: sched.steps(),
        beta_start: super::DEFAULT_BETA_START,
        beta_end: super::DEFAULT_BETA_END,
    };
    std::fs::write(dir.join(FIXTURE_META), serde_json::to_vec_pretty(&meta).expect("meta serializes"))
        .map_err(|e| DiffusionError::Fixture(e.to_string()))
}
