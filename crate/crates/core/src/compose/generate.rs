use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    apply_edit, render_pair, sample::place_onset, sample::pick_segment, sample_spec, ComposeError,
    EditMetadata, EditOp, EventPlacement, SceneConfig, SceneConstraints, Selector, SoundscapeSpec,
};
use crate::audio::{f32_checksum, Waveform};
use crate::curation::{Category, SegmentLibrary};
use crate::instruct::{LoudnessWord, SlotName, SlotValue, SlotValues, SpeedWord, TemplateBank};
use crate::task::{Direction, Subtype, Task};

/// Train-split task proportions of the reference corpus.
pub const REFERENCE_TASK_RATIOS: [(Task, u64); 6] = [
    (Task::Add, 260),
    (Task::Remove, 230),
    (Task::Replace, 250),
    (Task::Reorder, 150),
    (Task::Loudness, 100),
    (Task::Speed, 100),
];

pub type TaskMix = BTreeMap<Task, usize>;

/// Integer counts summing to `total` in proportion to `ratios`, by the
/// largest-remainder method (ties go to the earlier entry).
pub fn scale_task_mix(ratios: &[(Task, u64)], total: usize) -> TaskMix {
    let sum: u64 = ratios.iter().map(|(_, r)| r).sum();
    let mut mix: TaskMix = ratios.iter().map(|(t, _)| (*t, 0)).collect();
    if sum == 0 {
        return mix;
    }
    // exact rational arithmetic: share_i = total * r_i / sum
    let mut rem: Vec<(u64, usize, Task)> = Vec::with_capacity(ratios.len());
    let mut assigned = 0;
    for (i, (task, r)) in ratios.iter().enumerate() {
        let num = total as u64 * r;
        let base = (num / sum) as usize;
        *mix.get_mut(task).expect("present") += base;
        assigned += base;
        rem.push((num % sum, i, *task));
    }
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, _, task) in rem.into_iter().take(total - assigned) {
        *mix.get_mut(&task).expect("present") += 1;
    }
    mix
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub scene: SceneConfig,
    pub delta_db_range: [f64; 2],
    /// Speed factors are drawn uniformly over the union of these intervals.
    pub alpha_ranges: Vec<[f64; 2]>,
    pub max_segment_resamples: usize,
    /// Restricts the subtypes drawn for a task; absent tasks use all subtypes.
    pub subtypes: BTreeMap<Task, Vec<Subtype>>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            delta_db_range: [4.0, 10.0],
            alpha_ranges: vec![[0.5, 0.9], [1.1, 2.0]],
            max_segment_resamples: 10,
            subtypes: BTreeMap::new(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ComposeError> {
        self.scene.validate()?;
        let [lo, hi] = self.delta_db_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(ComposeError::InvalidConfig(format!("bad loudness range [{lo}, {hi}]")));
        }
        if self.alpha_ranges.is_empty()
            || self
                .alpha_ranges
                .iter()
                .any(|[a, b]| !(0.5 <= *a && a <= b && *b <= 2.0))
        {
            return Err(ComposeError::InvalidConfig(format!(
                "speed ranges {:?} must lie inside [0.5, 2.0]",
                self.alpha_ranges
            )));
        }
        for (task, list) in &self.subtypes {
            if list.is_empty() || list.iter().any(|s| s.task() != *task) {
                return Err(ComposeError::InvalidConfig(format!("bad subtype list for {task}")));
            }
        }
        Ok(())
    }

    fn subtypes_for(&self, task: Task) -> &[Subtype] {
        self.subtypes.get(&task).map_or(task.subtypes(), |v| v.as_slice())
    }

    fn sample_alpha<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total: f64 = self.alpha_ranges.iter().map(|[a, b]| b - a).sum();
        let mut u = if total > 0.0 { rng.gen_range(0.0..total) } else { 0.0 };
        for [a, b] in &self.alpha_ranges {
            if u <= b - a {
                return round_to(a + u, 0.01).clamp(*a, *b);
            }
            u -= b - a;
        }
        self.alpha_ranges.last().expect("validated")[1]
    }
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

/// Labels, onsets and levels of a scene, for the triplet record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub background: Option<String>,
    pub labels: Vec<String>,
    pub onsets_s: Vec<f64>,
    pub snrs_db: Vec<f64>,
    pub speed_factors: Vec<f64>,
}

impl SceneSummary {
    pub fn of(spec: &SoundscapeSpec, library: &SegmentLibrary) -> Self {
        let label = |id: &str| library.get(id).map_or_else(|| id.to_string(), |s| s.label.clone());
        Self {
            background: spec.background.as_ref().map(|b| label(&b.segment_id)),
            labels: spec.foregrounds.iter().map(|p| label(&p.segment_id)).collect(),
            onsets_s: spec.foregrounds.iter().map(|p| p.onset_s).collect(),
            snrs_db: spec.foregrounds.iter().map(|p| p.effective_level_db()).collect(),
            speed_factors: spec.foregrounds.iter().map(|p| p.speed_factor).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletMetadata {
    pub edit: EditMetadata,
    pub op: EditOp,
    pub slots: SlotValues,
    pub source: SceneSummary,
    pub edited: SceneSummary,
    pub source_spec: SoundscapeSpec,
    pub edited_spec: SoundscapeSpec,
    /// Shared gain applied to both renders to stay under the clip ceiling.
    pub norm_gain: f64,
    pub src_sha256: String,
    pub edit_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditTriplet {
    pub triplet_id: String,
    pub task: Task,
    pub subtype: Subtype,
    pub instruction: String,
    pub template_id: String,
    pub seed: u64,
    pub metadata: TripletMetadata,
    pub source_audio: Waveform,
    pub edited_audio: Waveform,
}

/// Instruction slot values implied by an edit.
pub fn slots_from_metadata(m: &EditMetadata) -> SlotValues {
    let mut slots = SlotValues::new().with(SlotName::Event, SlotValue::Text(m.event.clone()));
    if let Some(e2) = &m.event2 {
        slots.insert(SlotName::Event2, SlotValue::Text(e2.clone()));
    }
    if let Some(t) = m.onset_s {
        slots.insert(SlotName::OnsetS, SlotValue::Real(t));
    }
    if let Some(d) = m.delta_db {
        slots.insert(SlotName::DeltaDb, SlotValue::Real(d));
    }
    if let Some(dir) = m.direction {
        let word = match dir {
            Direction::Up => LoudnessWord::Louder,
            Direction::Down => LoudnessWord::Quieter,
        };
        slots.insert(SlotName::Direction, SlotValue::Direction(word));
    }
    if let Some(a) = m.alpha {
        slots.insert(SlotName::Alpha, SlotValue::Real(a));
        let word = if a > 1.0 { SpeedWord::Faster } else { SpeedWord::Slower };
        slots.insert(SlotName::SpeedWord, SlotValue::Speed(word));
    }
    slots
}

/// Per-triplet seed derived from the master seed and the triplet's index.
pub fn child_seed(master: u64, index: u64) -> u64 {
    let digest = Sha256::new()
        .chain_update(master.to_le_bytes())
        .chain_update(index.to_le_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn triplet_id(task: Task, k: usize) -> String {
    format!("{task}-{k:06}")
}

fn source_form(subtype: Subtype) -> SceneConstraints {
    use Subtype::*;
    let (background, foregrounds) = match subtype {
        AddForegroundToBackground => (true, 0),
        AddBackgroundToForeground => (false, 1),
        ReorderForegrounds => (false, 2),
        RemoveOneOfForegrounds | ReorderForegroundsOverBackground => (true, 2),
        _ => (true, 1),
    };
    SceneConstraints { background, foregrounds }
}

fn scene_labels<'a>(spec: &SoundscapeSpec, library: &'a SegmentLibrary) -> BTreeSet<&'a str> {
    spec.foregrounds
        .iter()
        .filter_map(|p| library.get(&p.segment_id))
        .map(|s| s.label.as_str())
        .collect()
}

fn draw_op<R: Rng + ?Sized>(
    subtype: Subtype,
    spec: &SoundscapeSpec,
    library: &SegmentLibrary,
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<EditOp, ComposeError> {
    use Subtype::*;
    let scene = &config.scene;
    Ok(match subtype {
        AddForegroundToBackground | AddSecondForeground => {
            let seg = pick_segment(library, Category::Foreground, &scene_labels(spec, library), rng)?;
            let len = library.audio(&seg.id)?.len();
            let taken = if scene.overlap_allowed { vec![] } else { spec.foreground_supports(library)? };
            let start = place_onset(&taken, len, spec.len_samples(), scene.grid_samples(), scene.max_placement_attempts, rng)
                .ok_or_else(|| ComposeError::Infeasible(format!("no room for {}", seg.id)))?;
            EditOp::Add {
                subtype,
                placement: EventPlacement::foreground(
                    &seg.id,
                    start as f64 / spec.sample_rate_hz as f64,
                    scene.sample_snr(rng),
                ),
            }
        }
        AddBackgroundToForeground => {
            let seg = pick_segment(library, Category::Background, &BTreeSet::new(), rng)?;
            EditOp::Add {
                subtype,
                placement: EventPlacement::background(&seg.id, spec.reference_db),
            }
        }
        RemoveOnlyForeground => EditOp::Remove { subtype, target: Selector::Foreground(0) },
        RemoveBackground => EditOp::Remove { subtype, target: Selector::Background },
        RemoveOneOfForegrounds => EditOp::Remove {
            subtype,
            target: Selector::Foreground(rng.gen_range(0..spec.foregrounds.len())),
        },
        SwapForeground => {
            let seg = pick_segment(library, Category::Foreground, &scene_labels(spec, library), rng)?;
            EditOp::Replace { subtype, target: Selector::Foreground(0), new_segment_id: seg.id.clone() }
        }
        SwapBackground => {
            let current = spec
                .background
                .as_ref()
                .and_then(|b| library.get(&b.segment_id))
                .map(|s| s.label.as_str());
            let seg = pick_segment(library, Category::Background, &current.into_iter().collect(), rng)?;
            EditOp::Replace { subtype, target: Selector::Background, new_segment_id: seg.id.clone() }
        }
        ReorderForegrounds | ReorderForegroundsOverBackground => {
            let (a, b) = (&spec.foregrounds[0], &spec.foregrounds[1]);
            let (first, second) = if a.onset_s <= b.onset_s { (0, 1) } else { (1, 0) };
            EditOp::Reorder { first: Selector::Foreground(first), second: Selector::Foreground(second) }
        }
        LouderForeground | QuieterForeground => {
            let [lo, hi] = config.delta_db_range;
            let delta = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
            EditOp::Loudness {
                target: Selector::Foreground(0),
                delta_db: round_to(delta, 0.1).clamp(lo, hi),
                direction: if subtype == LouderForeground { Direction::Up } else { Direction::Down },
            }
        }
        SpeedForeground => EditOp::Speed {
            target: Selector::Foreground(0),
            alpha: config.sample_alpha(rng),
        },
    })
}

/// Draws a source scene and an edit of the given subtype, resampling the
/// segment choice when placement or post-edit validation fails.
pub fn sample_edit<R: Rng + ?Sized>(
    subtype: Subtype,
    library: &SegmentLibrary,
    config: &GenerationConfig,
    scene_id: &str,
    seed: u64,
    rng: &mut R,
) -> Result<(SoundscapeSpec, EditOp, SoundscapeSpec, EditMetadata), ComposeError> {
    let mut last = None;
    for _ in 0..=config.max_segment_resamples {
        let attempt = sample_spec(library, &config.scene, source_form(subtype), scene_id, seed, rng)
            .and_then(|src| {
                let op = draw_op(subtype, &src, library, config, rng)?;
                let (edited, meta) = apply_edit(&src, &op, library)?;
                Ok((src, op, edited, meta))
            });
        match attempt {
            Ok(found) => return Ok(found),
            Err(e @ (ComposeError::Infeasible(_) | ComposeError::InvalidSpec(_))) => last = Some(e),
            Err(other) => return Err(other),
        }
    }
    Err(ComposeError::GenerationFailed {
        scene_id: scene_id.to_string(),
        attempts: config.max_segment_resamples + 1,
        last: last.map(|e| e.to_string()).unwrap_or_default(),
    })
}

/// Builds one complete triplet. Depends only on the arguments, so any
/// subset of triplets can be produced in any order.
pub fn generate_triplet(
    library: &SegmentLibrary,
    config: &GenerationConfig,
    bank: &TemplateBank,
    master_seed: u64,
    index: u64,
    task: Task,
    k: usize,
) -> Result<EditTriplet, ComposeError> {
    let seed = child_seed(master_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = triplet_id(task, k);
    let choices = config.subtypes_for(task);
    let subtype = choices[rng.gen_range(0..choices.len())];

    let (src, op, edited, meta) = sample_edit(subtype, library, config, &id, seed, &mut rng)?;
    let slots = slots_from_metadata(&meta);
    let instruction = bank.synthesize(task, meta.subtype, slots.clone(), &mut rng)?;
    let (source_audio, edited_audio, norm_gain) = render_pair(&src, &edited, library)?;

    Ok(EditTriplet {
        triplet_id: id,
        task,
        subtype: meta.subtype,
        instruction: instruction.text,
        template_id: instruction.template_id,
        seed,
        metadata: TripletMetadata {
            source: SceneSummary::of(&src, library),
            edited: SceneSummary::of(&edited, library),
            src_sha256: f32_checksum(&source_audio),
            edit_sha256: f32_checksum(&edited_audio),
            edit: meta,
            op,
            slots,
            source_spec: src,
            edited_spec: edited,
            norm_gain,
        },
        source_audio,
        edited_audio,
    })
}

/// Index plan: tasks in canonical order, `k`-th triplet of a task gets id
/// `<task>-<k>` and global index in plan order.
pub fn plan(mix: &TaskMix) -> Vec<(u64, Task, usize)> {
    let mut out = Vec::new();
    for task in Task::ALL {
        for k in 0..mix.get(&task).copied().unwrap_or(0) {
            out.push((out.len() as u64, task, k));
        }
    }
    out
}

/// Generates every triplet of `mix` in parallel chunks of `chunk` and hands
/// them to `sink` in plan order. Output is independent of thread count.
pub fn generate_triplets<E, F>(
    library: &SegmentLibrary,
    mix: &TaskMix,
    config: &GenerationConfig,
    bank: &TemplateBank,
    seed: u64,
    chunk: usize,
    mut sink: F,
) -> Result<usize, E>
where
    E: From<ComposeError> + Send,
    F: FnMut(EditTriplet) -> Result<(), E>,
{
    config.validate()?;
    let jobs = plan(mix);
    for batch in jobs.chunks(chunk.max(1)) {
        let made: Vec<Result<EditTriplet, ComposeError>> = batch
            .par_iter()
            .map(|&(index, task, k)| generate_triplet(library, config, bank, seed, index, task, k))
            .collect();
        for t in made {
            sink(t?)?;
        }
    }
    Ok(jobs.len())
}
