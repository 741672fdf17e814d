use serde::{Deserialize, Serialize};

use super::ComposeError;
use crate::audio::{SPEED_GUARD_MAX, SPEED_GUARD_MIN};
use crate::curation::{Category, SegmentLibrary};

pub const DEFAULT_SCENE_DURATION_S: f64 = 10.0;
pub const DEFAULT_REFERENCE_DB: f64 = -3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Foreground,
    Background,
}

impl From<Role> for Category {
    fn from(r: Role) -> Self {
        match r {
            Role::Foreground => Category::Foreground,
            Role::Background => Category::Background,
        }
    }
}

/// One event in a scene. For foregrounds `level_db` is the SNR above the
/// scene reference level; for the background it is the target RMS in dBFS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPlacement {
    pub segment_id: String,
    pub role: Role,
    pub onset_s: f64,
    pub level_db: f64,
    #[serde(default)]
    pub gain_offset_db: f64,
    #[serde(default = "one")]
    pub speed_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl EventPlacement {
    pub fn foreground(segment_id: impl Into<String>, onset_s: f64, snr_db: f64) -> Self {
        Self {
            segment_id: segment_id.into(),
            role: Role::Foreground,
            onset_s,
            level_db: snr_db,
            gain_offset_db: 0.0,
            speed_factor: 1.0,
        }
    }

    pub fn background(segment_id: impl Into<String>, level_db: f64) -> Self {
        Self {
            segment_id: segment_id.into(),
            role: Role::Background,
            onset_s: 0.0,
            level_db,
            gain_offset_db: 0.0,
            speed_factor: 1.0,
        }
    }

    /// Level actually used when rendering.
    pub fn effective_level_db(&self) -> f64 {
        self.level_db + self.gain_offset_db
    }
}

/// Declarative scene. Foreground SNRs are measured against a nominal
/// reference RMS of `reference_db` dBFS, which is also where a freshly
/// sampled background is leveled. Keeping the reference in the spec means
/// removing or swapping the background leaves foreground levels untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundscapeSpec {
    pub scene_id: String,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub reference_db: f64,
    pub background: Option<EventPlacement>,
    pub foregrounds: Vec<EventPlacement>,
    #[serde(default)]
    pub overlap_allowed: bool,
    pub seed: u64,
}

/// Number of output samples of a segment of `len` samples played at `alpha`.
pub fn effective_len(len: usize, alpha: f64) -> usize {
    if alpha == 1.0 {
        len
    } else {
        (len as f64 / alpha).round() as usize
    }
}

impl SoundscapeSpec {
    pub fn len_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn onset_sample(&self, p: &EventPlacement) -> usize {
        (p.onset_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn placements(&self) -> impl Iterator<Item = &EventPlacement> {
        self.background.iter().chain(&self.foregrounds)
    }

    /// Sample interval `[start, end)` occupied by each foreground.
    pub fn foreground_supports(
        &self,
        library: &SegmentLibrary,
    ) -> Result<Vec<(usize, usize)>, ComposeError> {
        self.foregrounds
            .iter()
            .map(|p| {
                let len = library.audio(&p.segment_id)?.len();
                let start = self.onset_sample(p);
                Ok((start, start + effective_len(len, p.speed_factor)))
            })
            .collect()
    }

    /// Checks every structural invariant against `library`.
    pub fn validate(&self, library: &SegmentLibrary) -> Result<(), ComposeError> {
        let bad = |msg: String| Err(ComposeError::InvalidSpec(format!("{}: {msg}", self.scene_id)));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} must be positive", self.duration_s));
        }
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive".into());
        }
        if !self.reference_db.is_finite() {
            return bad("reference level must be finite".into());
        }
        if self.background.is_none() && self.foregrounds.is_empty() {
            return bad("scene has no placements".into());
        }
        if let Some(bg) = &self.background {
            if bg.role != Role::Background {
                return bad("background slot holds a foreground placement".into());
            }
            if bg.onset_s != 0.0 {
                return bad("background must start at 0".into());
            }
        }
        if self.foregrounds.iter().any(|p| p.role != Role::Foreground) {
            return bad("foreground list holds a background placement".into());
        }
        for p in self.placements() {
            if !(p.onset_s >= 0.0 && p.onset_s.is_finite()) {
                return bad(format!("onset {} of {} invalid", p.onset_s, p.segment_id));
            }
            if !(p.level_db.is_finite() && p.gain_offset_db.is_finite()) {
                return bad(format!("non-finite level on {}", p.segment_id));
            }
            if !(SPEED_GUARD_MIN..=SPEED_GUARD_MAX).contains(&p.speed_factor) {
                return bad(format!("speed factor {} of {} out of range", p.speed_factor, p.segment_id));
            }
            let seg = library
                .get(&p.segment_id)
                .ok_or_else(|| ComposeError::MissingSegment(p.segment_id.clone()))?;
            if seg.category != Category::from(p.role) {
                return bad(format!("segment {} is not a {:?} segment", p.segment_id, p.role));
            }
            let audio = library.audio(&p.segment_id)?;
            if audio.sample_rate_hz() != self.sample_rate_hz {
                return bad(format!(
                    "segment {} is at {} Hz, scene at {} Hz",
                    p.segment_id,
                    audio.sample_rate_hz(),
                    self.sample_rate_hz
                ));
            }
        }

        let n = self.len_samples();
        let mut supports = self.foreground_supports(library)?;
        for (p, (start, end)) in self.foregrounds.iter().zip(&supports) {
            if *end > n {
                return bad(format!(
                    "{} at {:.3} s runs {} samples past the scene end",
                    p.segment_id,
                    p.onset_s,
                    end - n
                ));
            }
            if start == end {
                return bad(format!("{} has no samples", p.segment_id));
            }
        }
        if !self.overlap_allowed {
            supports.sort_unstable();
            if supports.windows(2).any(|w| w[1].0 < w[0].1) {
                return bad("foreground events overlap".into());
            }
        }
        Ok(())
    }
}
