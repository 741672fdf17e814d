use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ComposeError, EventPlacement, SoundscapeSpec, DEFAULT_REFERENCE_DB, DEFAULT_SCENE_DURATION_S};
use crate::audio::DEFAULT_SAMPLE_RATE;
use crate::curation::{Category, EventSegment, SegmentLibrary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    /// Background RMS target and foreground SNR reference, dBFS.
    pub reference_db: f64,
    pub snr_range_db: [f64; 2],
    pub overlap_allowed: bool,
    pub max_placement_attempts: usize,
    /// Foreground onsets are drawn on this grid (seconds); 0 means any sample.
    pub onset_grid_s: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            duration_s: DEFAULT_SCENE_DURATION_S,
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            reference_db: DEFAULT_REFERENCE_DB,
            snr_range_db: [0.0, 15.0],
            overlap_allowed: false,
            max_placement_attempts: 100,
            onset_grid_s: 0.1,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), ComposeError> {
        let [lo, hi] = self.snr_range_db;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite())
            || self.sample_rate_hz == 0
            || !self.reference_db.is_finite()
            || !(lo.is_finite() && hi.is_finite() && lo <= hi)
            || self.max_placement_attempts == 0
            || !(self.onset_grid_s >= 0.0 && self.onset_grid_s < self.duration_s)
        {
            return Err(ComposeError::InvalidConfig(format!("bad scene settings: {self:?}")));
        }
        Ok(())
    }

    pub fn len_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz as f64).round() as usize
    }

    pub(crate) fn grid_samples(&self) -> usize {
        ((self.onset_grid_s * self.sample_rate_hz as f64).round() as usize).max(1)
    }

    pub(crate) fn sample_snr<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let [lo, hi] = self.snr_range_db;
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneConstraints {
    pub background: bool,
    pub foregrounds: usize,
}

/// Uniform choice among `category` segments whose label is not excluded.
pub(crate) fn pick_segment<'a, R: Rng + ?Sized>(
    library: &'a SegmentLibrary,
    category: Category,
    exclude_labels: &BTreeSet<&str>,
    rng: &mut R,
) -> Result<&'a EventSegment, ComposeError> {
    let pool: Vec<&EventSegment> = library
        .by_category(category)
        .into_iter()
        .filter(|s| !exclude_labels.contains(s.label.as_str()))
        .collect();
    if pool.is_empty() {
        return Err(ComposeError::Infeasible(format!(
            "no {category:?} segment outside labels {exclude_labels:?}"
        )));
    }
    Ok(pool[rng.gen_range(0..pool.len())])
}

/// Rejection-samples a start sample (a multiple of `grid`) for an event of
/// `len` samples inside a scene of `n` samples that avoids every interval
/// in `taken`.
pub(crate) fn place_onset<R: Rng + ?Sized>(
    taken: &[(usize, usize)],
    len: usize,
    n: usize,
    grid: usize,
    attempts: usize,
    rng: &mut R,
) -> Option<usize> {
    if len == 0 || len > n {
        return None;
    }
    (0..attempts).find_map(|_| {
        let start = rng.gen_range(0..=(n - len) / grid) * grid;
        let end = start + len;
        taken
            .iter()
            .all(|&(a, b)| end <= a || b <= start)
            .then_some(start)
    })
}

/// Draws a scene with the requested number of placements. Foreground
/// labels are distinct within the scene.
pub fn sample_spec<R: Rng + ?Sized>(
    library: &SegmentLibrary,
    config: &SceneConfig,
    constraints: SceneConstraints,
    scene_id: &str,
    seed: u64,
    rng: &mut R,
) -> Result<SoundscapeSpec, ComposeError> {
    config.validate()?;
    if !constraints.background && constraints.foregrounds == 0 {
        return Err(ComposeError::InvalidConfig("scene needs at least one placement".into()));
    }
    let rate = config.sample_rate_hz as f64;
    let n = config.len_samples();

    let background = if constraints.background {
        let seg = pick_segment(library, Category::Background, &BTreeSet::new(), rng)?;
        Some(EventPlacement::background(&seg.id, config.reference_db))
    } else {
        None
    };

    let mut used = BTreeSet::new();
    let mut taken = Vec::new();
    let mut foregrounds = Vec::with_capacity(constraints.foregrounds);
    for _ in 0..constraints.foregrounds {
        let seg = pick_segment(library, Category::Foreground, &used, rng)?;
        used.insert(seg.label.as_str());
        let len = library.audio(&seg.id)?.len();
        let blocked: &[(usize, usize)] = if config.overlap_allowed { &[] } else { &taken };
        let start = place_onset(blocked, len, n, config.grid_samples(), config.max_placement_attempts, rng).ok_or_else(|| {
            ComposeError::Infeasible(format!(
                "could not place {} ({} samples) in {scene_id} after {} attempts",
                seg.id, len, config.max_placement_attempts
            ))
        })?;
        taken.push((start, start + len));
        foregrounds.push(EventPlacement::foreground(
            &seg.id,
            start as f64 / rate,
            config.sample_snr(rng),
        ));
    }

    let spec = SoundscapeSpec {
        scene_id: scene_id.to_string(),
        duration_s: config.duration_s,
        sample_rate_hz: config.sample_rate_hz,
        reference_db: config.reference_db,
        background,
        foregrounds,
        overlap_allowed: config.overlap_allowed,
        seed,
    };
    spec.validate(library)?;
    Ok(spec)
}
