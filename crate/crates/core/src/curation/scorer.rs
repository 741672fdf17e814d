use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::audio::{stft_magnitude, StftParams, Waveform};

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ScorerError(pub String);

/// Text-audio agreement score in [-1, 1]. Implementations must be
/// deterministic and callable from several threads at once.
pub trait SimilarityScorer: Send + Sync {
    fn score(&self, label: &str, w: &Waveform) -> Result<f64, ScorerError>;
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl SimilarityScorer for ConstantScorer {
    fn score(&self, _label: &str, _w: &Waveform) -> Result<f64, ScorerError> {
        Ok(self.0)
    }
}

/// Fixed score per label, e.g. loaded from `{"dog bark": 0.8, ...}`.
/// Unknown labels are scorer failures.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    scores: BTreeMap<String, f64>,
}

impl TableScorer {
    pub fn new(scores: BTreeMap<String, f64>) -> Self {
        Self { scores }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ScorerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScorerError(format!("{}: {e}", path.display())))?;
        let scores = serde_json::from_str(&text)
            .map_err(|e| ScorerError(format!("{}: {e}", path.display())))?;
        Ok(Self { scores })
    }
}

impl SimilarityScorer for TableScorer {
    fn score(&self, label: &str, _w: &Waveform) -> Result<f64, ScorerError> {
        self.scores
            .get(label)
            .copied()
            .ok_or_else(|| ScorerError(format!("no score for label '{label}'")))
    }
}

/// Crude label/audio agreement: keywords in the label imply an expected
/// spectral-centroid band, and the score falls off with the distance (in
/// octaves) between the clip's centroid and that band. Labels without a
/// known keyword get `unknown_score`.
#[derive(Debug, Clone)]
pub struct KeywordScorer {
    bands: Vec<(&'static str, f64, f64)>,
    pub unknown_score: f64,
}

impl Default for KeywordScorer {
    fn default() -> Self {
        Self {
            bands: vec![
                ("thunder", 30.0, 400.0),
                ("engine", 50.0, 800.0),
                ("drum", 50.0, 1200.0),
                ("rumble", 30.0, 400.0),
                ("car", 80.0, 1500.0),
                ("traffic", 80.0, 1500.0),
                ("dog", 300.0, 2500.0),
                ("speech", 200.0, 3000.0),
                ("voice", 200.0, 3000.0),
                ("cough", 300.0, 3000.0),
                ("knock", 200.0, 2500.0),
                ("piano", 200.0, 3000.0),
                ("bell", 800.0, 5000.0),
                ("bird", 1500.0, 7000.0),
                ("siren", 600.0, 3000.0),
                ("whistle", 1000.0, 5000.0),
                ("rain", 1500.0, 7000.0),
                ("wind", 100.0, 2000.0),
                ("water", 500.0, 5000.0),
                ("keyboard", 1500.0, 7000.0),
                ("glass", 2000.0, 7500.0),
                ("hiss", 2500.0, 7900.0),
            ],
            unknown_score: 0.5,
        }
    }
}

impl KeywordScorer {
    fn band_for(&self, label: &str) -> Option<(f64, f64)> {
        let lower = label.to_ascii_lowercase();
        self.bands
            .iter()
            .find(|(k, _, _)| lower.split(|c: char| !c.is_ascii_alphanumeric()).any(|w| w.starts_with(k)))
            .map(|&(_, lo, hi)| (lo, hi))
    }
}

/// Magnitude-weighted mean frequency, in Hz.
pub fn spectral_centroid(w: &Waveform) -> Option<f64> {
    let frame_len = 1024.min(w.len().next_power_of_two()).max(16);
    let params = StftParams {
        frame_len,
        hop: frame_len / 2,
        ..Default::default()
    };
    let spec = stft_magnitude(w, &params).ok()?;
    let bin_hz = w.sample_rate_hz() as f64 / frame_len as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for t in 0..spec.frames() {
        for (k, m) in spec.frame(t).iter().enumerate() {
            num += k as f64 * bin_hz * m;
            den += m;
        }
    }
    (den > 0.0).then(|| num / den)
}

impl SimilarityScorer for KeywordScorer {
    fn score(&self, label: &str, w: &Waveform) -> Result<f64, ScorerError> {
        let Some((lo, hi)) = self.band_for(label) else {
            return Ok(self.unknown_score);
        };
        let centroid = spectral_centroid(w).ok_or_else(|| ScorerError("silent segment".into()))?;
        let octaves = if centroid < lo {
            (lo / centroid.max(1.0)).log2()
        } else if centroid > hi {
            (centroid / hi).log2()
        } else {
            0.0
        };
        Ok((1.0 - octaves).max(-1.0))
    }
}
