use serde::{Deserialize, Serialize};

use super::CurationError;
use crate::audio::{peak, AudioError, Waveform};

/// Energy-detector settings. Levels are dB relative to the clip's sample peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub frame_ms: f64,
    pub on_threshold_db: f64,
    pub off_threshold_db: f64,
    pub min_event_ms: f64,
    pub min_gap_ms: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            frame_ms: 50.0,
            on_threshold_db: -20.0,
            off_threshold_db: -30.0,
            min_event_ms: 200.0,
            min_gap_ms: 150.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        if !(self.frame_ms > 0.0 && self.frame_ms.is_finite()) {
            return Err(CurationError::InvalidParameter(format!(
                "frame_ms must be positive, got {}",
                self.frame_ms
            )));
        }
        if self.on_threshold_db.partial_cmp(&self.off_threshold_db).is_none_or(|o| o.is_lt()) {
            return Err(CurationError::InvalidParameter(format!(
                "on threshold {} dB below off threshold {} dB",
                self.on_threshold_db, self.off_threshold_db
            )));
        }
        if !(self.min_event_ms >= 0.0 && self.min_gap_ms >= 0.0) {
            return Err(CurationError::InvalidParameter(
                "minimum event and gap lengths must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Frame length in samples at `rate`, at least one.
    pub fn frame_len(&self, rate: u32) -> usize {
        ((self.frame_ms * rate as f64 / 1000.0).round() as usize).max(1)
    }
}

/// Per-frame RMS in dB relative to the sample peak over non-overlapping
/// frames; the last frame may be partial. Silent frames map to -inf.
pub fn frame_levels_db(w: &Waveform, frame_len: usize) -> Vec<f64> {
    let p = peak(w);
    w.samples()
        .chunks(frame_len)
        .map(|frame| {
            let ms = frame.iter().map(|s| s * s).sum::<f64>() / frame.len() as f64;
            if p == 0.0 || ms == 0.0 {
                f64::NEG_INFINITY
            } else {
                20.0 * (ms.sqrt() / p).log10()
            }
        })
        .collect()
}

/// Hysteresis energy detection. Returns sorted, disjoint `(onset_s, offset_s)`
/// intervals on frame boundaries.
pub fn detect_events(w: &Waveform, config: &DetectorConfig) -> Result<Vec<(f64, f64)>, CurationError> {
    if w.is_empty() {
        return Err(AudioError::Empty.into());
    }
    config.validate()?;
    let rate = w.sample_rate_hz() as f64;
    let frame_len = config.frame_len(w.sample_rate_hz());
    let levels = frame_levels_db(w, frame_len);

    // Frame-index regions [start, end).
    let mut regions: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &db) in levels.iter().enumerate() {
        match open {
            None if db >= config.on_threshold_db => open = Some(i),
            Some(start) if db < config.off_threshold_db => {
                regions.push((start, i));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        regions.push((start, levels.len()));
    }

    let to_s = |frame: usize| (frame * frame_len).min(w.len()) as f64 / rate;
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(regions.len());
    for (a, b) in regions {
        let (on, off) = (to_s(a), to_s(b));
        match merged.last_mut() {
            Some(last) if (on - last.1) * 1000.0 < config.min_gap_ms => last.1 = off,
            _ => merged.push((on, off)),
        }
    }
    merged.retain(|(on, off)| (off - on) * 1000.0 >= config.min_event_ms);
    Ok(merged)
}
