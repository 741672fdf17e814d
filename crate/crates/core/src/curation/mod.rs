//! Turning raw labeled clips into a library of single-event segments.

mod build;
mod detect;
mod library;
mod scorer;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, Waveform};

pub use build::{build_library, ClipEntry, ClipFailure, CurationConfig, CurationReport, ScoreNote};
pub use detect::{detect_events, frame_levels_db, DetectorConfig};
pub use library::SegmentLibrary;
pub use scorer::{spectral_centroid, ConstantScorer, KeywordScorer, ScorerError, SimilarityScorer, TableScorer};

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.3;
pub const DEFAULT_FG_MAX_S: f64 = 5.0;
pub const DEFAULT_BG_MIN_S: f64 = 8.0;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Manifest {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    InvalidEntry { path: PathBuf, reason: String },
    #[error("no segments survived curation")]
    EmptyLibrary,
    #[error("unknown segment '{0}'")]
    UnknownSegment(String),
    #[error("duplicate segment id '{0}'")]
    DuplicateSegment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Foreground,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Foreground,
    Background,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSegment {
    pub id: String,
    pub label: String,
    /// Relative to the library root, '/'-separated.
    pub audio_path: String,
    pub onset_s: f64,
    pub offset_s: f64,
    pub duration_s: f64,
    pub category: Category,
    pub source_clip_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

/// Duration thresholds: `duration <= fg_max_s` is foreground,
/// `duration >= bg_min_s` is background, anything between is rejected.
pub fn categorize(duration_s: f64, fg_max_s: f64, bg_min_s: f64) -> Verdict {
    debug_assert!(0.0 < fg_max_s && fg_max_s <= bg_min_s);
    if duration_s <= fg_max_s {
        Verdict::Foreground
    } else if duration_s >= bg_min_s {
        Verdict::Background
    } else {
        Verdict::Rejected
    }
}

/// A segment together with its cropped audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub segment: EventSegment,
    pub audio: Waveform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dropped {
    pub candidate: Candidate,
    pub score: Option<f64>,
    /// Set when the scorer failed or returned an out-of-range value.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityPartition {
    pub kept: Vec<Candidate>,
    pub dropped: Vec<Dropped>,
}

/// Keeps candidates scoring at least `threshold`, annotating each with its
/// score. Scorer failures drop the candidate with a note.
pub fn filter_similarity(
    candidates: Vec<Candidate>,
    scorer: &dyn SimilarityScorer,
    threshold: f64,
) -> Result<SimilarityPartition, CurationError> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(CurationError::InvalidParameter(format!(
            "similarity threshold {threshold} outside [-1, 1]"
        )));
    }
    let mut out = SimilarityPartition::default();
    for mut candidate in candidates {
        match scorer.score(&candidate.segment.label, &candidate.audio) {
            Ok(s) if (-1.0..=1.0).contains(&s) => {
                if s >= threshold {
                    candidate.segment.similarity = Some(s);
                    out.kept.push(candidate);
                } else {
                    out.dropped.push(Dropped { candidate, score: Some(s), note: None });
                }
            }
            Ok(s) => out.dropped.push(Dropped {
                candidate,
                score: None,
                note: Some(format!("score {s} outside [-1, 1]")),
            }),
            Err(e) => out.dropped.push(Dropped {
                candidate,
                score: None,
                note: Some(e.to_string()),
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ByLabel;
    impl SimilarityScorer for ByLabel {
        fn score(&self, label: &str, _w: &Waveform) -> Result<f64, ScorerError> {
            match label {
                "broken" => Err(ScorerError("model offline".into())),
                "wild" => Ok(3.0),
                other => other.parse().map_err(|_| ScorerError("bad".into())),
            }
        }
    }

    fn candidate(label: &str) -> Candidate {
        Candidate {
            segment: EventSegment {
                id: label.into(),
                label: label.into(),
                audio_path: String::new(),
                onset_s: 0.0,
                offset_s: 1.0,
                duration_s: 1.0,
                category: Category::Foreground,
                source_clip_id: "c".into(),
                similarity: None,
            },
            audio: Waveform::silence(10, 16000).unwrap(),
        }
    }

    fn labels(c: &[Candidate]) -> Vec<&str> {
        c.iter().map(|c| c.segment.label.as_str()).collect()
    }

    #[test]
    fn categorize_bands() {
        assert_eq!(categorize(2.0, 5.0, 8.0), Verdict::Foreground);
        assert_eq!(categorize(5.0, 5.0, 8.0), Verdict::Foreground);
        assert_eq!(categorize(10.0, 5.0, 8.0), Verdict::Background);
        assert_eq!(categorize(8.0, 5.0, 8.0), Verdict::Background);
        assert_eq!(categorize(6.0, 5.0, 8.0), Verdict::Rejected);
    }

    #[test]
    fn constant_scores() {
        let all = || vec![candidate("a"), candidate("b")];
        let p = filter_similarity(all(), &ConstantScorer(1.0), 0.3).unwrap();
        assert_eq!(p.kept.len(), 2);
        assert!(p.kept.iter().all(|c| c.segment.similarity == Some(1.0)));
        let p = filter_similarity(all(), &ConstantScorer(0.29), 0.3).unwrap();
        assert!(p.kept.is_empty());
        assert_eq!(p.dropped.len(), 2);
    }

    #[test]
    fn mixed_scores_and_failures() {
        let input = ["0.1", "0.3", "0.9", "broken", "wild"].map(candidate).to_vec();
        let p = filter_similarity(input, &ByLabel, 0.3).unwrap();
        assert_eq!(labels(&p.kept), vec!["0.3", "0.9"]);
        assert_eq!(p.dropped.len(), 3);
        assert_eq!(p.dropped[1].note.as_deref(), Some("model offline"));
        assert!(p.dropped[2].note.is_some());
        assert!(filter_similarity(vec![], &ByLabel, 1.5).is_err());
    }
}
