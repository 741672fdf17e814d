use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use editsynth_core::compose::{generate_triplets, scale_task_mix, ComposeError, REFERENCE_TASK_RATIOS};
use editsynth_core::config::{parse_override, resolve, ConfigError, ResolvedConfig, ENV_CONFIG_FILE};
use editsynth_core::curation::{build_library, CurationError, SegmentLibrary};
use editsynth_core::dataset::{read_dataset, split_records, validate, write_split, DatasetWriter};
use editsynth_core::diffusion::{run_checks, write_fixture, Perturbation};
use editsynth_core::instruct::TemplateBank;
use editsynth_core::metrics::evaluate_dataset;
use editsynth_core::task::Task;

const AFTER_HELP: &str = "\
Configuration is merged from built-in defaults, a JSON file (--config or EDITSYNTH_CONFIG),
environment variables prefixed EDITSYNTH_ (nesting separated by `__`, e.g.
EDITSYNTH_GENERATION__SCENE__DURATION_S=12), and --set key.path=value flags, in that order.

Exit codes: 0 success, 1 check or validation failure, 2 usage or configuration error.";

#[derive(Parser)]
#[command(name = "editsynth", version, about = "Synthetic audio-editing dataset toolkit", after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. --set generation.scene.duration_s=12
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a segment library from a clip manifest
    Curate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate editing triplets from a segment library
    Synth {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Triplets per task
        #[arg(long, conflicts_with = "total")]
        per_task: Option<usize>,
        /// Total triplets, split by the reference task proportions
        #[arg(long)]
        total: Option<usize>,
    },
    /// Score generated outputs against a dataset
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of generated `<triplet_id>.wav` files
        #[arg(long)]
        generated_audio: Option<PathBuf>,
    },
    /// Run the diffusion kernel identity and oracle suite
    DiffusionCheck {
        #[arg(long)]
        seed: Option<u64>,
        /// Corrupt one kernel's output to exercise failure reporting
        #[arg(long, value_enum)]
        perturb: Option<Perturbation>,
        /// Also check stored latent fixtures in this directory
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Write a fresh latent fixture to this directory first
        #[arg(long)]
        write_fixture: Option<PathBuf>,
        /// Report path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a dataset against its manifest
    Validate {
        #[arg(long)]
        dataset: PathBuf,
        /// Report path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-task stratified split manifests
    Split {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated name=ratio pairs
        #[arg(long, default_value = "train=0.8,valid=0.1,test=0.1")]
        ratios: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn failed(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

type Outcome = Result<ExitCode, Failure>;

fn resolve_config(common: &Common, extra: Vec<(String, Value)>) -> Result<ResolvedConfig, Failure> {
    let file = common.config.clone().or_else(|| std::env::var_os(ENV_CONFIG_FILE).map(PathBuf::from));
    let mut overrides = common
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, ConfigError>>()
        .map_err(usage)?;
    overrides.extend(extra);
    resolve(file.as_deref(), std::env::vars(), &overrides).map_err(usage)
}

fn require_exists(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(anyhow!("{what} '{}' does not exist (see --help)", path.display())))
    }
}

/// Reports carry the resolved config next to the payload.
fn envelope(cfg: &ResolvedConfig, report: &impl Serialize) -> Vec<u8> {
    let doc = json!({
        "config_hash": cfg.hash,
        "config": cfg.canonical,
        "report": report,
    });
    let mut out = serde_json::to_vec_pretty(&doc).expect("report serializes");
    out.push(b'\n');
    out
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| parent.display().to_string()).map_err(failed)?;
            }
            std::fs::write(path, bytes).with_context(|| path.display().to_string()).map_err(failed)
        }
        None => std::io::stdout().write_all(bytes).context("stdout").map_err(failed),
    }
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn curate(common: &Common, manifest: &Path, out: &Path) -> Outcome {
    require_exists(manifest, "manifest")?;
    let cfg = resolve_config(common, vec![])?;
    let scorer = cfg.config.scorer.build().map_err(usage)?;
    let (library, report) = build_library(manifest, scorer.as_ref(), &cfg.config.curation, out).map_err(|e| match e {
        CurationError::InvalidParameter(_) => usage(e),
        e => failed(e),
    })?;
    for f in &report.clips_failed {
        warn!("skipped clip {}: {}", f.clip_id, f.error);
    }
    emit(Some(&out.join("run_config.json")), &envelope(&cfg, &json!({ "library_fingerprint": library.fingerprint() })))?;
    info!(
        "library: {} segments ({} foreground, {} background), {} clips skipped",
        library.len(),
        report.foreground,
        report.background,
        report.clips_failed.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn synth(common: &Common, library: &Path, out: &Path, seed: Option<u64>, per_task: Option<usize>, total: Option<usize>) -> Outcome {
    require_exists(library, "library")?;
    let mut extra = Vec::new();
    if let Some(s) = seed {
        extra.push(("seed".to_string(), json!(s)));
    }
    if let Some(n) = per_task {
        extra.push(("task_mix".to_string(), json!(Task::ALL.iter().map(|t| (t.name().to_string(), json!(n))).collect::<serde_json::Map<_, _>>())));
    }
    if let Some(n) = total {
        let mix = scale_task_mix(&REFERENCE_TASK_RATIOS, n);
        extra.push(("task_mix".to_string(), serde_json::to_value(mix).expect("mix serializes")));
    }
    let cfg = resolve_config(common, extra)?;
    let run = &cfg.config;
    let bank = match &run.templates {
        Some(p) => TemplateBank::from_json_file(p).with_context(|| p.display().to_string()).map_err(usage)?,
        None => TemplateBank::default_bank(),
    };
    let lib = SegmentLibrary::load(library).map_err(failed)?;
    let rate = run.generation.scene.sample_rate_hz;
    let mut writer = DatasetWriter::create(out, rate, &cfg.hash, cfg.canonical.clone(), &bank).map_err(failed)?;

    let started = std::time::Instant::now();
    let total = generate_triplets::<anyhow::Error, _>(&lib, &run.task_mix, &run.generation, &bank, run.seed, run.chunk_size, |t| {
        writer.write(t).map_err(Into::into)
    })
    .map_err(|e| match e.downcast_ref::<ComposeError>() {
        Some(ComposeError::Infeasible(_) | ComposeError::InvalidConfig(_)) => usage(e),
        _ => failed(e),
    })?;
    writer.finish().map_err(failed)?;
    info!("wrote {total} triplets to {} in {:.1?}", out.display(), started.elapsed());

    let report = validate(out).map_err(failed)?;
    for v in report.violations.iter().take(20) {
        warn!("{v:?}");
    }
    if !report.is_clean() {
        warn!("{} validation violations", report.violations.len());
    }
    Ok(status(report.is_clean()))
}

fn eval(common: &Common, dataset: &Path, embeddings: &Path, out: &Path, generated: Option<PathBuf>) -> Outcome {
    require_exists(dataset, "dataset")?;
    require_exists(embeddings, "embeddings directory")?;
    let mut extra = Vec::new();
    if let Some(g) = generated {
        extra.push(("eval.generated_audio_dir".to_string(), json!(g)));
    }
    let cfg = resolve_config(common, extra)?;
    let report = evaluate_dataset(dataset, embeddings, &cfg.config.eval).map_err(failed)?;
    emit(Some(out), &envelope(&cfg, &report))?;
    info!("evaluated {} items, {} warnings", report.overall.items, report.warnings.len());
    Ok(ExitCode::SUCCESS)
}

fn diffusion_check(
    common: &Common,
    seed: Option<u64>,
    perturb: Option<Perturbation>,
    fixture: Option<PathBuf>,
    new_fixture: Option<PathBuf>,
    out: Option<&Path>,
) -> Outcome {
    let extra = seed.map(|s| ("diffusion_check.seed".to_string(), json!(s))).into_iter().collect();
    let cfg = resolve_config(common, extra)?;
    let seed = cfg.config.diffusion_check.seed;
    if let Some(dir) = &new_fixture {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string()).map_err(failed)?;
        write_fixture(dir, seed, 8, 250, 500).map_err(failed)?;
        info!("wrote latent fixture to {}", dir.display());
    }
    let fixture = fixture.or(new_fixture);
    if let Some(dir) = &fixture {
        require_exists(dir, "fixture directory")?;
    }
    let report = run_checks(seed, perturb, fixture.as_deref()).map_err(failed)?;
    emit(out, &envelope(&cfg, &report))?;
    for name in report.failing() {
        warn!("identity failed: {name}");
    }
    info!("{} of {} checks passed", report.checks.iter().filter(|c| c.passed).count(), report.checks.len());
    Ok(status(report.passed))
}

fn validate_cmd(common: &Common, dataset: &Path, out: Option<&Path>) -> Outcome {
    require_exists(dataset, "dataset")?;
    let cfg = resolve_config(common, vec![])?;
    let report = validate(dataset).map_err(failed)?;
    emit(out, &envelope(&cfg, &report))?;
    info!("{} records, {} violations", report.records, report.violations.len());
    Ok(status(report.is_clean()))
}

fn parse_ratios(s: &str) -> anyhow::Result<Vec<(String, f64)>> {
    s.split(',')
        .map(|part| {
            let (name, r) = part.split_once('=').ok_or_else(|| anyhow!("expected name=ratio, got '{part}'"))?;
            let r: f64 = r.trim().parse().with_context(|| format!("ratio for '{name}'"))?;
            Ok((name.trim().to_string(), r))
        })
        .collect()
}

fn split_cmd(common: &Common, dataset: &Path, ratios: &str, seed: Option<u64>) -> Outcome {
    require_exists(dataset, "dataset")?;
    let ratios = parse_ratios(ratios).map_err(usage)?;
    let extra = seed.map(|s| ("seed".to_string(), json!(s))).into_iter().collect();
    let cfg = resolve_config(common, extra)?;
    let (header, records) = read_dataset(dataset).map_err(failed)?;
    let splits = split_records(&records, &ratios, cfg.config.seed).map_err(usage)?;
    for (name, recs) in &splits {
        let path = write_split(dataset, name, &header, recs).map_err(failed)?;
        info!("{name}: {} records -> {}", recs.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("worker pool")
            .map_err(usage)?;
    }
    let c = &cli.common;
    match cli.command {
        Command::Curate { manifest, out } => curate(c, &manifest, &out),
        Command::Synth { library, out, seed, per_task, total } => synth(c, &library, &out, seed, per_task, total),
        Command::Eval { dataset, embeddings, out, generated_audio } => eval(c, &dataset, &embeddings, &out, generated_audio),
        Command::DiffusionCheck { seed, perturb, fixture, write_fixture, out } => {
            diffusion_check(c, seed, perturb, fixture, write_fixture, out.as_deref())
        }
        Command::Validate { dataset, out } => validate_cmd(c, &dataset, out.as_deref()),
        Command::Split { dataset, ratios, seed } => split_cmd(c, &dataset, &ratios, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
