use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    categorize, detect_events, filter_similarity, Candidate, Category, CurationError,
    DetectorConfig, EventSegment, SegmentLibrary, SimilarityScorer, Verdict,
    DEFAULT_BG_MIN_S, DEFAULT_FG_MAX_S, DEFAULT_SIMILARITY_THRESHOLD,
};
use crate::audio::{load_wav_at, save_wav, BitDepth, Waveform, DEFAULT_SAMPLE_RATE};

pub const REPORT_FILE: &str = "curation_report.json";
pub const SEGMENT_DIR: &str = "segments";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    pub sample_rate_hz: u32,
    pub detector: DetectorConfig,
    pub similarity_threshold: f64,
    pub fg_max_s: f64,
    pub bg_min_s: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            detector: DetectorConfig::default(),
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            fg_max_s: DEFAULT_FG_MAX_S,
            bg_min_s: DEFAULT_BG_MIN_S,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        self.detector.validate()?;
        if self.sample_rate_hz == 0 {
            return Err(CurationError::InvalidParameter("sample rate must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(CurationError::InvalidParameter(format!(
                "similarity threshold {} outside [-1, 1]",
                self.similarity_threshold
            )));
        }
        if !(self.fg_max_s > 0.0 && self.fg_max_s <= self.bg_min_s) {
            return Err(CurationError::InvalidParameter(format!(
                "need 0 < fg_max_s ({}) <= bg_min_s ({})",
                self.fg_max_s, self.bg_min_s
            )));
        }
        Ok(())
    }
}

/// One line of the input clip manifest. `events`, when present, replaces
/// the energy detector with externally supplied `[onset_s, offset_s]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub clip_id: String,
    pub path: PathBuf,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFailure {
    pub clip_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreNote {
    pub clip_id: String,
    pub label: String,
    pub onset_s: f64,
    pub score: Option<f64>,
    pub note: String,
}

/// Per-stage counts. For every run,
/// `detected = kept + overlap_dropped + unlabeled_dropped + similarity_dropped + rejected + duplicates`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurationReport {
    pub clips_total: usize,
    pub clips_failed: Vec<ClipFailure>,
    pub detected: usize,
    pub overlap_dropped: usize,
    pub unlabeled_dropped: usize,
    pub similarity_dropped: usize,
    pub rejected: usize,
    pub duplicates: usize,
    pub kept: usize,
    pub foreground: usize,
    pub background: usize,
    pub scorer_notes: Vec<ScoreNote>,
}

impl CurationReport {
    pub fn balanced(&self) -> bool {
        self.detected
            == self.kept
                + self.overlap_dropped
                + self.unlabeled_dropped
                + self.similarity_dropped
                + self.rejected
                + self.duplicates
    }
}

#[derive(Default)]
struct ClipOutcome {
    detected: usize,
    overlap_dropped: usize,
    unlabeled_dropped: usize,
    similarity_dropped: usize,
    rejected: usize,
    kept: Vec<Candidate>,
    notes: Vec<ScoreNote>,
}

/// Content address of a segment: hash of its label and stored samples.
pub fn segment_id(label: &str, w: &Waveform) -> String {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update([0u8]);
    h.update(w.sample_rate_hz().to_le_bytes());
    for s in w.samples() {
        h.update((*s as f32).to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// Drops every interval that overlaps another one; touching ends do not count.
fn drop_overlapping(events: &[(f64, f64)]) -> (Vec<(f64, f64)>, usize) {
    let clean: Vec<(f64, f64)> = events
        .iter()
        .enumerate()
        .filter(|(i, a)| {
            !events
                .iter()
                .enumerate()
                .any(|(j, b)| *i != j && a.0 < b.1 && b.0 < a.1)
        })
        .map(|(_, e)| *e)
        .collect();
    let dropped = events.len() - clean.len();
    (clean, dropped)
}

fn read_manifest(path: &Path) -> Result<Vec<ClipEntry>, CurationError> {
    let file = std::fs::File::open(path).map_err(|source| CurationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CurationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| CurationError::Manifest {
                path: path.to_path_buf(),
                line: n + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

fn process_clip(
    entry: &ClipEntry,
    base: &Path,
    scorer: &dyn SimilarityScorer,
    config: &CurationConfig,
) -> Result<ClipOutcome, CurationError> {
    let path = base.join(&entry.path);
    if entry.labels.is_empty() {
        return Err(CurationError::InvalidEntry {
            path,
            reason: "clip has no labels".into(),
        });
    }
    let audio = load_wav_at(&path, config.sample_rate_hz)?;
    let events = match &entry.events {
        Some(ev) => {
            if let Some(bad) = ev.iter().find(|(a, b)| !(0.0 <= *a && a < b && b.is_finite())) {
                return Err(CurationError::InvalidEntry {
                    path,
                    reason: format!("bad event interval {bad:?}"),
                });
            }
            ev.clone()
        }
        None => detect_events(&audio, &config.detector)?,
    };

    let mut out = ClipOutcome {
        detected: events.len(),
        ..Default::default()
    };
    let (clean, overlap) = drop_overlapping(&events);
    out.overlap_dropped = overlap;

    // Label assignment: one label covers every event; otherwise labels pair
    // with the original events in order.
    let labeled: Vec<((f64, f64), &str)> = if entry.labels.len() == 1 {
        clean.iter().map(|e| (*e, entry.labels[0].as_str())).collect()
    } else if entry.labels.len() == events.len() {
        events
            .iter()
            .zip(&entry.labels)
            .filter(|(e, _)| clean.contains(e))
            .map(|(e, l)| (*e, l.as_str()))
            .collect()
    } else {
        out.unlabeled_dropped = clean.len();
        Vec::new()
    };

    let rate = config.sample_rate_hz as f64;
    let mut candidates = Vec::with_capacity(labeled.len());
    for ((on, off), label) in labeled {
        let start = ((on * rate).round() as usize).min(audio.len());
        let end = ((off * rate).round() as usize).min(audio.len());
        if end <= start {
            out.rejected += 1;
            continue;
        }
        let crop = audio.slice(start, end);
        let duration_s = (end - start) as f64 / rate;
        let category = match categorize(duration_s, config.fg_max_s, config.bg_min_s) {
            Verdict::Background => Category::Background,
            _ => Category::Foreground,
        };
        let id = segment_id(label, &crop);
        candidates.push(Candidate {
            segment: EventSegment {
                audio_path: format!("{SEGMENT_DIR}/{id}.wav"),
                id,
                label: label.to_string(),
                onset_s: start as f64 / rate,
                offset_s: end as f64 / rate,
                duration_s,
                category,
                source_clip_id: entry.clip_id.clone(),
                similarity: None,
            },
            audio: crop,
        });
    }

    let partition = filter_similarity(candidates, scorer, config.similarity_threshold)?;
    out.similarity_dropped = partition.dropped.len();
    out.notes = partition
        .dropped
        .into_iter()
        .filter_map(|d| {
            d.note.map(|note| ScoreNote {
                clip_id: entry.clip_id.clone(),
                label: d.candidate.segment.label,
                onset_s: d.candidate.segment.onset_s,
                score: d.score,
                note,
            })
        })
        .collect();
    for c in partition.kept {
        match categorize(c.segment.duration_s, config.fg_max_s, config.bg_min_s) {
            Verdict::Rejected => out.rejected += 1,
            _ => out.kept.push(c),
        }
    }
    Ok(out)
}

/// Runs detection, overlap removal, cropping, similarity filtering and
/// categorization for every clip in `manifest_path`, then writes
/// `segments/<id>.wav`, `library.jsonl` and `curation_report.json` under
/// `out_dir`. Clip paths are relative to the manifest's directory.
pub fn build_library(
    manifest_path: impl AsRef<Path>,
    scorer: &dyn SimilarityScorer,
    config: &CurationConfig,
    out_dir: impl AsRef<Path>,
) -> Result<(SegmentLibrary, CurationReport), CurationError> {
    config.validate()?;
    let manifest_path = manifest_path.as_ref();
    let out_dir = out_dir.as_ref();
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let entries = read_manifest(manifest_path)?;

    let outcomes: Vec<Result<ClipOutcome, CurationError>> = entries
        .par_iter()
        .map(|e| process_clip(e, base, scorer, config))
        .collect();

    let mut report = CurationReport {
        clips_total: entries.len(),
        ..Default::default()
    };
    let mut kept: Vec<Candidate> = Vec::new();
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                report.detected += o.detected;
                report.overlap_dropped += o.overlap_dropped;
                report.unlabeled_dropped += o.unlabeled_dropped;
                report.similarity_dropped += o.similarity_dropped;
                report.rejected += o.rejected;
                report.scorer_notes.extend(o.notes);
                kept.extend(o.kept);
            }
            Err(e) => {
                log::warn!("skipping clip {}: {e}", entry.clip_id);
                report.clips_failed.push(ClipFailure {
                    clip_id: entry.clip_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }

    // Identical label and audio yield the same id; keep the first in manifest order.
    let before = kept.len();
    let mut seen = std::collections::HashSet::new();
    kept.retain(|c| seen.insert(c.segment.id.clone()));
    report.duplicates = before - kept.len();
    report.kept = kept.len();
    report.foreground = kept.iter().filter(|c| c.segment.category == Category::Foreground).count();
    report.background = report.kept - report.foreground;
    if kept.is_empty() {
        return Err(CurationError::EmptyLibrary);
    }

    let seg_dir = out_dir.join(SEGMENT_DIR);
    std::fs::create_dir_all(&seg_dir).map_err(|source| CurationError::Io {
        path: seg_dir.clone(),
        source,
    })?;
    kept.par_iter().try_for_each(|c| {
        save_wav(&c.audio, out_dir.join(&c.segment.audio_path), BitDepth::Float32).map(|_| ())
    })?;

    // Reload through f32 so in-memory audio matches what later runs read.
    let stored: Vec<Candidate> = kept
        .into_iter()
        .map(|c| {
            let rate = c.audio.sample_rate_hz();
            let samples = c.audio.samples().iter().map(|s| *s as f32 as f64).collect();
            Ok(Candidate {
                audio: Waveform::new(samples, rate)?,
                segment: c.segment,
            })
        })
        .collect::<Result<_, CurationError>>()?;
    let mut library = SegmentLibrary::in_memory(stored)?;
    library.write_manifest(out_dir)?;
    library.set_root(out_dir);

    let report_path = out_dir.join(REPORT_FILE);
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    std::fs::write(&report_path, json).map_err(|source| CurationError::Io {
        path: report_path,
        source,
    })?;
    Ok((library, report))
}
