use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    frechet_distance, gaussian_stats, inception_score, lsd, paired_kl, EmbeddingSet, MetricsError, ProbMatrix,
    DEFAULT_KL_EPS, DEFAULT_LSD_EPS,
};
use crate::audio::{load_wav, StftParams};
use crate::dataset::{read_dataset, TripletRecord};
use crate::task::Task;

/// Name of the embedding tag holding class probabilities (KL and IS input).
pub const PROBS_TAG: &str = "probs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub stft: StftParams,
    pub lsd_eps: f64,
    pub kl_eps: f64,
    pub is_splits: usize,
    /// Directory of generated audio named `<triplet_id>.wav`. When unset,
    /// `<embeddings_dir>/audio` is used if it exists.
    pub generated_audio_dir: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            stft: StftParams::default(),
            lsd_eps: DEFAULT_LSD_EPS,
            kl_eps: DEFAULT_KL_EPS,
            is_splits: 10,
            generated_audio_dir: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.lsd_eps > 0.0 && self.kl_eps > 0.0) {
            return Err(MetricsError::InvalidConfig("epsilons must be positive".into()));
        }
        if self.is_splits == 0 {
            return Err(MetricsError::InvalidConfig("is_splits must be at least 1".into()));
        }
        Ok(())
    }
}

/// One table row. Absent metrics are `None` and come with a warning.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub items: usize,
    pub lsd: Option<f64>,
    pub fd: BTreeMap<String, f64>,
    pub kl: Option<f64>,
    pub is_mean: Option<f64>,
    pub is_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_config_hash: String,
    pub config: EvalConfig,
    pub formulas: BTreeMap<String, String>,
    pub per_task: BTreeMap<Task, MetricRow>,
    pub overall: MetricRow,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }
}

fn formulas() -> BTreeMap<String, String> {
    [
        ("lsd", "mean_t sqrt(mean_f (log10(|S_ref|^2 + eps) - log10(|S_gen|^2 + eps))^2), reference = dataset edited audio"),
        ("fd", "|mu_ref - mu_gen|^2 + tr(S_ref + S_gen - 2 (S_ref S_gen)^(1/2)), covariance divisor N-1, one entry per embedding tag"),
        ("kl", "mean over paired rows of sum_k p_ref ln((p_ref + eps) / (p_gen + eps)), direction ref||gen, natural log"),
        ("is", "exp(mean_i KL(p_gen(.|x_i) || split marginal)) over contiguous splits, mean and population std"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

struct Inputs {
    audio_dir: Option<PathBuf>,
    /// tag -> (reference, generated)
    embeddings: BTreeMap<String, (EmbeddingSet, EmbeddingSet)>,
    probs: Option<(EmbeddingSet, EmbeddingSet)>,
}

fn discover_tags(dir: &Path) -> Result<Vec<String>, MetricsError> {
    let entries = std::fs::read_dir(dir).map_err(|source| MetricsError::Io { path: dir.to_path_buf(), source })?;
    let mut tags = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| MetricsError::Io { path: dir.to_path_buf(), source })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(tag) = name.strip_suffix(".ref.json") {
            tags.push(tag.to_string());
        }
    }
    tags.sort();
    Ok(tags)
}

fn load_inputs(embeddings_dir: &Path, cfg: &EvalConfig, warnings: &mut Vec<String>) -> Result<Inputs, MetricsError> {
    let audio_dir = match &cfg.generated_audio_dir {
        Some(d) => Some(d.clone()),
        None => Some(embeddings_dir.join("audio")).filter(|d| d.is_dir()),
    };
    if audio_dir.is_none() {
        warnings.push("no generated audio directory; LSD not computed".into());
    }

    let mut embeddings = BTreeMap::new();
    let mut probs = None;
    for tag in discover_tags(embeddings_dir)? {
        let (ref_name, gen_name) = (format!("{tag}.ref"), format!("{tag}.gen"));
        if !EmbeddingSet::exists(embeddings_dir, &ref_name) || !EmbeddingSet::exists(embeddings_dir, &gen_name) {
            warnings.push(format!("embedding tag '{tag}' lacks a complete ref/gen pair; skipped"));
            continue;
        }
        let pair = (
            EmbeddingSet::load(embeddings_dir, &ref_name)?,
            EmbeddingSet::load(embeddings_dir, &gen_name)?,
        );
        if tag == PROBS_TAG {
            probs = Some(pair);
        } else {
            embeddings.insert(tag, pair);
        }
    }
    if embeddings.is_empty() {
        warnings.push("no embedding sets found; FD not computed".into());
    }
    if probs.is_none() {
        warnings.push(format!("no '{PROBS_TAG}' probability sets found; KL and IS not computed"));
    }
    Ok(Inputs { audio_dir, embeddings, probs })
}

fn select_pair(pair: &(EmbeddingSet, EmbeddingSet), ids: &[&str]) -> Option<(EmbeddingSet, EmbeddingSet)> {
    Some((pair.0.select(ids)?, pair.1.select(ids)?))
}

fn per_item_lsd(
    records: &[TripletRecord],
    root: &Path,
    audio_dir: &Path,
    cfg: &EvalConfig,
) -> Vec<Result<f64, String>> {
    records
        .par_iter()
        .map(|r| {
            let reference = load_wav(root.join(&r.edit_path)).map_err(|e| e.to_string())?;
            let generated = load_wav(audio_dir.join(format!("{}.wav", r.triplet_id))).map_err(|e| e.to_string())?;
            lsd(&reference, &generated, &cfg.stft, cfg.lsd_eps).map_err(|e| e.to_string())
        })
        .collect()
}

fn row_for(
    label: &str,
    records: &[&TripletRecord],
    lsd_values: &BTreeMap<&str, f64>,
    inputs: &Inputs,
    cfg: &EvalConfig,
) -> (MetricRow, Vec<String>) {
    let mut warnings = Vec::new();
    let ids: Vec<&str> = records.iter().map(|r| r.triplet_id.as_str()).collect();
    let mut row = MetricRow {
        items: ids.len(),
        ..MetricRow::default()
    };

    if inputs.audio_dir.is_some() {
        let vals: Vec<f64> = ids.iter().filter_map(|id| lsd_values.get(id).copied()).collect();
        if vals.len() == ids.len() && !vals.is_empty() {
            row.lsd = Some(vals.iter().sum::<f64>() / vals.len() as f64);
        } else {
            warnings.push(format!("{label}: LSD excluded, {} of {} items unavailable", ids.len() - vals.len(), ids.len()));
        }
    }

    for (tag, pair) in &inputs.embeddings {
        let fd = select_pair(pair, &ids)
            .ok_or_else(|| "missing embedding rows".to_string())
            .and_then(|(a, b)| {
                let sa = gaussian_stats(&a).map_err(|e| e.to_string())?;
                let sb = gaussian_stats(&b).map_err(|e| e.to_string())?;
                frechet_distance(&sa, &sb).map_err(|e| e.to_string())
            });
        match fd {
            Ok(v) => {
                row.fd.insert(tag.clone(), v);
            }
            Err(e) => warnings.push(format!("{label}: FD[{tag}] excluded, {e}")),
        }
    }

    if let Some(pair) = &inputs.probs {
        let probs = select_pair(pair, &ids)
            .ok_or_else(|| "missing probability rows".to_string())
            .and_then(|(a, b)| {
                Ok((
                    ProbMatrix::from_set(&a).map_err(|e| e.to_string())?,
                    ProbMatrix::from_set(&b).map_err(|e| e.to_string())?,
                ))
            });
        match probs {
            Ok((p_ref, p_gen)) => {
                match paired_kl(&p_ref, &p_gen, cfg.kl_eps) {
                    Ok(v) => row.kl = Some(v),
                    Err(e) => warnings.push(format!("{label}: KL excluded, {e}")),
                }
                match inception_score(&p_gen, cfg.is_splits, cfg.kl_eps) {
                    Ok((m, s)) => {
                        row.is_mean = Some(m);
                        row.is_std = Some(s);
                    }
                    Err(e) => warnings.push(format!("{label}: IS excluded, {e}")),
                }
            }
            Err(e) => warnings.push(format!("{label}: KL and IS excluded, {e}")),
        }
    }
    (row, warnings)
}

/// Scores generated outputs against the dataset's edited audio. Missing
/// inputs exclude the affected metric with a warning; the report is
/// deterministic for fixed inputs.
pub fn evaluate_dataset(
    dataset_root: impl AsRef<Path>,
    embeddings_dir: impl AsRef<Path>,
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    cfg.validate()?;
    let root = dataset_root.as_ref();
    let (header, records) = read_dataset(root)?;
    let mut warnings = Vec::new();
    let inputs = load_inputs(embeddings_dir.as_ref(), cfg, &mut warnings)?;

    let mut lsd_values = BTreeMap::new();
    if let Some(dir) = &inputs.audio_dir {
        let results = per_item_lsd(&records, root, dir, cfg);
        let mut failures = 0;
        for (r, res) in records.iter().zip(results) {
            match res {
                Ok(v) => {
                    lsd_values.insert(r.triplet_id.as_str(), v);
                }
                Err(e) => {
                    failures += 1;
                    log::debug!("LSD for {}: {e}", r.triplet_id);
                }
            }
        }
        if failures > 0 {
            warnings.push(format!("LSD unavailable for {failures} items (missing or unreadable generated audio)"));
        }
    }

    let mut by_task: BTreeMap<Task, Vec<&TripletRecord>> = BTreeMap::new();
    for r in &records {
        by_task.entry(r.task).or_default().push(r);
    }
    let task_rows: Vec<(Task, (MetricRow, Vec<String>))> = by_task
        .par_iter()
        .map(|(task, recs)| (*task, row_for(task.name(), recs, &lsd_values, &inputs, cfg)))
        .collect();
    let all: Vec<&TripletRecord> = records.iter().collect();
    let (overall, overall_warnings) = row_for("overall", &all, &lsd_values, &inputs, cfg);

    let mut per_task = BTreeMap::new();
    for (task, (row, w)) in task_rows {
        per_task.insert(task, row);
        warnings.extend(w);
    }
    warnings.extend(overall_warnings);
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(EvalReport {
        dataset_config_hash: header.config_hash,
        config: cfg.clone(),
        formulas: formulas(),
        per_task,
        overall,
        warnings,
    })
}
