//! Python bindings. Waveforms cross the boundary as `list[float]`, latents and
//! matrices as `list[list[float]]` (rows), structured reports as plain dicts.

use std::path::PathBuf;

use editsynth_core::audio::{self, BitDepth, SnrDb, StftParams, Waveform};
use editsynth_core::compose::{generate_triplets, scale_task_mix, REFERENCE_TASK_RATIOS};
use editsynth_core::config::resolve;
use editsynth_core::curation::{build_library, SegmentLibrary};
use editsynth_core::dataset::{validate, DatasetWriter};
use editsynth_core::diffusion::{self, Latent, Perturbation};
use editsynth_core::instruct::TemplateBank;
use editsynth_core::metrics::{self, EmbeddingSet, GaussianStats, ProbMatrix, DEFAULT_KL_EPS, DEFAULT_LSD_EPS};
use editsynth_core::task::Task;
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde_json::json;

create_exception!(editsynth, EditsynthError, PyException);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    EditsynthError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(err("ragged rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn latent(rows: Vec<Vec<f64>>) -> PyResult<Latent> {
    Latent::new(matrix(rows)?).map_err(err)
}

/// Mono audio at a fixed sample rate.
#[pyclass(name = "Waveform", module = "editsynth", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWaveform(Waveform);

#[pymethods]
impl PyWaveform {
    #[new]
    fn new(samples: Vec<f64>, sample_rate_hz: u32) -> PyResult<Self> {
        Waveform::new(samples, sample_rate_hz).map(Self).map_err(err)
    }

    /// Loads a WAV file, resampling to `sample_rate_hz` when given.
    #[staticmethod]
    #[pyo3(signature = (path, sample_rate_hz=None))]
    fn load(path: PathBuf, sample_rate_hz: Option<u32>) -> PyResult<Self> {
        match sample_rate_hz {
            Some(r) => audio::load_wav_at(&path, r),
            None => audio::load_wav(&path),
        }
        .map(Self)
        .map_err(err)
    }

    /// Writes a WAV file; `bits` is 16, 24 or 32 (float).
    #[pyo3(signature = (path, bits=32))]
    fn save(&self, path: PathBuf, bits: u16) -> PyResult<()> {
        let depth = match bits {
            16 => BitDepth::Pcm16,
            24 => BitDepth::Pcm24,
            32 => BitDepth::Float32,
            other => return Err(err(format!("unsupported bit depth {other}"))),
        };
        audio::save_wav(&self.0, &path, depth).map(|_| ()).map_err(err)
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.0.samples().to_vec()
    }

    #[getter]
    fn sample_rate_hz(&self) -> u32 {
        self.0.sample_rate_hz()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.0.duration_s()
    }

    fn rms(&self) -> PyResult<f64> {
        audio::rms(&self.0).map_err(err)
    }

    fn peak(&self) -> f64 {
        audio::peak(&self.0)
    }

    fn resample(&self, sample_rate_hz: u32) -> PyResult<Self> {
        audio::resample(&self.0, sample_rate_hz).map(Self).map_err(err)
    }

    fn time_stretch(&self, alpha: f64) -> PyResult<Self> {
        audio::time_stretch(&self.0, alpha).map(Self).map_err(err)
    }

    /// sha256 of the samples as little-endian f32.
    fn checksum(&self) -> String {
        audio::f32_checksum(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Waveform(len={}, sample_rate_hz={})", self.0.len(), self.0.sample_rate_hz())
    }
}

/// Adds `fg` into `bg` at `onset_s`, scaled to sit `snr_db` above the background RMS.
#[pyfunction]
fn mix_at_snr(fg: &PyWaveform, bg: &PyWaveform, snr_db: f64, onset_s: f64) -> PyResult<PyWaveform> {
    let snr = SnrDb::new(snr_db).map_err(err)?;
    audio::mix_at_snr(&fg.0, &bg.0, snr, onset_s).map(|m| PyWaveform(m.waveform)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (reference, generated, frame_len=1024, hop=256, eps=DEFAULT_LSD_EPS))]
fn lsd(reference: &PyWaveform, generated: &PyWaveform, frame_len: usize, hop: usize, eps: f64) -> PyResult<f64> {
    let params = StftParams { frame_len, hop, ..StftParams::default() };
    metrics::lsd(&reference.0, &generated.0, &params, eps).map_err(err)
}

/// Fréchet distance between Gaussians fitted to two embedding matrices (rows are items).
#[pyfunction]
fn frechet_distance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    let stats = |m: Vec<Vec<f64>>, tag: &str| {
        EmbeddingSet::from_rows(m, tag).and_then(|s| metrics::gaussian_stats(&s)).map_err(err)
    };
    metrics::frechet_distance(&stats(a, "a")?, &stats(b, "b")?).map_err(err)
}

/// Fréchet distance from precomputed means and covariances.
#[pyfunction]
fn frechet_distance_stats(mean_a: Vec<f64>, cov_a: Vec<Vec<f64>>, mean_b: Vec<f64>, cov_b: Vec<Vec<f64>>) -> PyResult<f64> {
    let a = GaussianStats::new(mean_a, cov_a).map_err(err)?;
    let b = GaussianStats::new(mean_b, cov_b).map_err(err)?;
    metrics::frechet_distance(&a, &b).map_err(err)
}

/// Mean over rows of KL(reference_i ‖ generated_i).
#[pyfunction]
#[pyo3(signature = (reference, generated, eps=DEFAULT_KL_EPS))]
fn paired_kl(reference: Vec<Vec<f64>>, generated: Vec<Vec<f64>>, eps: f64) -> PyResult<f64> {
    let p = ProbMatrix::from_rows(&reference).map_err(err)?;
    let q = ProbMatrix::from_rows(&generated).map_err(err)?;
    metrics::paired_kl(&p, &q, eps).map_err(err)
}

/// Returns `(mean, std)` over `splits` contiguous splits.
#[pyfunction]
#[pyo3(signature = (probs, splits=10, eps=DEFAULT_KL_EPS))]
fn inception_score(probs: Vec<Vec<f64>>, splits: usize, eps: f64) -> PyResult<(f64, f64)> {
    let p = ProbMatrix::from_rows(&probs).map_err(err)?;
    metrics::inception_score(&p, splits, eps).map_err(err)
}

/// Linear-β noise schedule.
#[pyclass(name = "NoiseSchedule", module = "editsynth", frozen)]
struct PySchedule(diffusion::NoiseSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (steps=diffusion::DEFAULT_STEPS, beta_start=diffusion::DEFAULT_BETA_START, beta_end=diffusion::DEFAULT_BETA_END))]
    fn new(steps: usize, beta_start: f64, beta_end: f64) -> PyResult<Self> {
        diffusion::make_schedule(steps, beta_start, beta_end, diffusion::ScheduleKind::Linear).map(Self).map_err(err)
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    #[getter]
    fn alpha_bar(&self) -> Vec<f64> {
        self.0.alpha_bar().to_vec()
    }

    /// `(sqrt(alpha_bar[t]), sqrt(1 - alpha_bar[t]))`.
    fn coefficients(&self, t: usize) -> PyResult<(f64, f64)> {
        self.0.coefficients(t).map_err(err)
    }
}

#[pyfunction]
fn forward_diffuse(z0: Vec<Vec<f64>>, eps: Vec<Vec<f64>>, t: usize, schedule: &PySchedule) -> PyResult<Vec<Vec<f64>>> {
    let out = diffusion::forward_diffuse(&latent(z0)?, &latent(eps)?, t, &schedule.0).map_err(err)?;
    Ok(rows(out.matrix()))
}

#[pyfunction]
fn velocity_target(z0: Vec<Vec<f64>>, eps: Vec<Vec<f64>>, t: usize, schedule: &PySchedule) -> PyResult<Vec<Vec<f64>>> {
    let out = diffusion::velocity_target(&latent(z0)?, &latent(eps)?, t, &schedule.0).map_err(err)?;
    Ok(rows(out.matrix()))
}

type Rows = Vec<Vec<f64>>;

/// Returns `(z0_hat, eps_hat)`.
#[pyfunction]
fn recover_from_velocity(
    z_t: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
    schedule: &PySchedule,
) -> PyResult<(Rows, Rows)> {
    let (z0, eps) = diffusion::recover_from_velocity(&latent(z_t)?, &latent(v)?, t, &schedule.0).map_err(err)?;
    Ok((rows(z0.matrix()), rows(eps.matrix())))
}

#[pyfunction]
fn cfg_combine(uncond: Vec<Vec<f64>>, cond: Vec<Vec<f64>>, w: f64) -> PyResult<Vec<Vec<f64>>> {
    let out = diffusion::cfg_combine(&latent(uncond)?, &latent(cond)?, w).map_err(err)?;
    Ok(rows(out.matrix()))
}

#[pyfunction]
fn ddim_step(z_t: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: usize, t_prev: usize, schedule: &PySchedule) -> PyResult<Vec<Vec<f64>>> {
    let out = diffusion::ddim_step(&latent(z_t)?, &latent(v)?, t, t_prev, &schedule.0).map_err(err)?;
    Ok(rows(out.matrix()))
}

#[pyfunction]
fn uniform_ladder(steps: usize, n: usize) -> PyResult<Vec<usize>> {
    diffusion::uniform_ladder(steps, n).map_err(err)
}

/// Runs the kernel self-check suite; `perturb` names a kernel to corrupt.
#[pyfunction]
#[pyo3(signature = (seed=0, perturb=None))]
fn diffusion_check<'py>(py: Python<'py>, seed: u64, perturb: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let perturb: Option<Perturbation> = perturb
        .map(|p| serde_json::from_value(json!(p)).map_err(|_| err(format!("unknown kernel {p:?}"))))
        .transpose()?;
    let report = py.detach(|| diffusion::run_checks(seed, perturb, None)).map_err(err)?;
    to_py(py, &report)
}

/// Builds a segment library from a clip manifest (JSON lines of
/// `{clip_id, path, labels}`) and returns the curation report.
#[pyfunction]
#[pyo3(signature = (manifest, out, config=None))]
fn curate<'py>(py: Python<'py>, manifest: PathBuf, out: PathBuf, config: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = resolve(config.as_deref(), std::iter::empty(), &[]).map_err(err)?;
    let scorer = cfg.config.scorer.build().map_err(err)?;
    let (library, report) =
        py.detach(|| build_library(&manifest, scorer.as_ref(), &cfg.config.curation, &out)).map_err(err)?;
    to_py(py, &json!({"library_fingerprint": library.fingerprint(), "segments": library.len(), "report": report}))
}

/// Generates a dataset from a segment library directory and validates it.
/// With neither `per_task` nor `total`, the config's task mix is used.
#[pyfunction]
#[pyo3(signature = (library, out, seed=None, per_task=None, total=None, config=None))]
fn synthesize<'py>(
    py: Python<'py>,
    library: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    per_task: Option<usize>,
    total: Option<usize>,
    config: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut overrides = Vec::new();
    if let Some(s) = seed {
        overrides.push(("seed".to_string(), json!(s)));
    }
    if let Some(n) = per_task {
        let mix: serde_json::Map<_, _> = Task::ALL.iter().map(|t| (t.name().to_string(), json!(n))).collect();
        overrides.push(("task_mix".to_string(), json!(mix)));
    }
    if let Some(n) = total {
        overrides.push(("task_mix".to_string(), serde_json::to_value(scale_task_mix(&REFERENCE_TASK_RATIOS, n)).map_err(err)?));
    }
    let cfg = resolve(config.as_deref(), std::iter::empty(), &overrides).map_err(err)?;
    let report = py.detach(|| -> Result<_, String> {
        let run = &cfg.config;
        let bank = match &run.templates {
            Some(p) => TemplateBank::from_json_file(p).map_err(|e| e.to_string())?,
            None => TemplateBank::default_bank(),
        };
        let lib = SegmentLibrary::load(&library).map_err(|e| e.to_string())?;
        let rate = run.generation.scene.sample_rate_hz;
        let mut writer =
            DatasetWriter::create(&out, rate, &cfg.hash, cfg.canonical.clone(), &bank).map_err(|e| e.to_string())?;
        generate_triplets::<Box<dyn std::error::Error + Send + Sync>, _>(&lib, &run.task_mix, &run.generation, &bank, run.seed, run.chunk_size, |t| {
            writer.write(t).map_err(Into::into)
        })
        .map_err(|e| e.to_string())?;
        writer.finish().map_err(|e| e.to_string())?;
        validate(&out).map_err(|e| e.to_string())
    });
    let report = report.map_err(err)?;
    to_py(py, &json!({"config_hash": cfg.hash, "validation": report}))
}

/// Re-checks a dataset directory; returns `{records, violations}`.
#[pyfunction]
fn validate_dataset<'py>(py: Python<'py>, root: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| validate(&root)).map_err(err)?;
    to_py(py, &report)
}

/// Target triplet counts for `total` items at the reference task ratios.
#[pyfunction]
fn reference_task_mix<'py>(py: Python<'py>, total: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &scale_task_mix(&REFERENCE_TASK_RATIOS, total))
}

#[pymodule]
fn editsynth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EditsynthError", m.py().get_type::<EditsynthError>())?;
    m.add_class::<PyWaveform>()?;
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(mix_at_snr, m)?)?;
    m.add_function(wrap_pyfunction!(lsd, m)?)?;
    m.add_function(wrap_pyfunction!(frechet_distance, m)?)?;
    m.add_function(wrap_pyfunction!(frechet_distance_stats, m)?)?;
    m.add_function(wrap_pyfunction!(paired_kl, m)?)?;
    m.add_function(wrap_pyfunction!(inception_score, m)?)?;
    m.add_function(wrap_pyfunction!(forward_diffuse, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_target, m)?)?;
    m.add_function(wrap_pyfunction!(recover_from_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(cfg_combine, m)?)?;
    m.add_function(wrap_pyfunction!(ddim_step, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_ladder, m)?)?;
    m.add_function(wrap_pyfunction!(diffusion_check, m)?)?;
    m.add_function(wrap_pyfunction!(curate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(validate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(reference_task_mix, m)?)?;
    Ok(())
}
