use serde::{Deserialize, Serialize};

use super::{ComposeError, EventPlacement, Role, SoundscapeSpec};
use crate::curation::SegmentLibrary;
use crate::task::{Direction, Subtype, Task};

pub const SPEED_EDIT_MIN: f64 = 0.5;
pub const SPEED_EDIT_MAX: f64 = 2.0;
/// Speed edits must move the rate by at least this much.
pub const SPEED_EDIT_MIN_CHANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Background,
    Foreground(usize),
    /// The unique placement using this segment id.
    Segment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Background,
    Foreground(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Add {
        subtype: Subtype,
        placement: EventPlacement,
    },
    Remove {
        subtype: Subtype,
        target: Selector,
    },
    Replace {
        subtype: Subtype,
        target: Selector,
        new_segment_id: String,
    },
    Reorder {
        first: Selector,
        second: Selector,
    },
    Loudness {
        target: Selector,
        delta_db: f64,
        direction: Direction,
    },
    Speed {
        target: Selector,
        alpha: f64,
    },
}

impl EditOp {
    pub fn task(&self) -> Task {
        match self {
            EditOp::Add { .. } => Task::Add,
            EditOp::Remove { .. } => Task::Remove,
            EditOp::Replace { .. } => Task::Replace,
            EditOp::Reorder { .. } => Task::Reorder,
            EditOp::Loudness { .. } => Task::Loudness,
            EditOp::Speed { .. } => Task::Speed,
        }
    }
}

/// What an edit did, in terms the instruction templates can use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditMetadata {
    pub task: Task,
    pub subtype: Subtype,
    /// Label of the added, removed or targeted event (the earlier one for reorders).
    pub event: String,
    /// Replacement label, or the later event of a reorder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event2: Option<String>,
    /// Onset of the targeted foreground in the source scene (the added one for adds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onset_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Foreground indices whose onsets were swapped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<[usize; 2]>,
}

fn resolve(spec: &SoundscapeSpec, sel: &Selector) -> Result<Slot, ComposeError> {
    let err = |m: String| Err(ComposeError::Selector(m));
    match sel {
        Selector::Background => match spec.background {
            Some(_) => Ok(Slot::Background),
            None => err("scene has no background".into()),
        },
        Selector::Foreground(i) if *i < spec.foregrounds.len() => Ok(Slot::Foreground(*i)),
        Selector::Foreground(i) => err(format!(
            "foreground {i} requested, scene has {}",
            spec.foregrounds.len()
        )),
        Selector::Segment(id) => {
            let mut hits = spec
                .foregrounds
                .iter()
                .enumerate()
                .filter(|(_, p)| &p.segment_id == id)
                .map(|(i, _)| Slot::Foreground(i))
                .collect::<Vec<_>>();
            if spec.background.as_ref().is_some_and(|b| &b.segment_id == id) {
                hits.push(Slot::Background);
            }
            match hits.as_slice() {
                [one] => Ok(*one),
                [] => err(format!("no placement uses segment {id}")),
                _ => err(format!("segment {id} is placed {} times", hits.len())),
            }
        }
    }
}

fn foreground(spec: &SoundscapeSpec, sel: &Selector) -> Result<usize, ComposeError> {
    match resolve(spec, sel)? {
        Slot::Foreground(i) => Ok(i),
        Slot::Background => Err(ComposeError::Selector("edit needs a foreground target".into())),
    }
}

fn label(library: &SegmentLibrary, id: &str) -> Result<String, ComposeError> {
    library
        .get(id)
        .map(|s| s.label.clone())
        .ok_or_else(|| ComposeError::MissingSegment(id.to_string()))
}

/// Source-form check: background presence and foreground count bounds.
fn require_form(
    spec: &SoundscapeSpec,
    subtype: Subtype,
    background: bool,
    min_fg: usize,
    max_fg: usize,
) -> Result<(), ComposeError> {
    let n = spec.foregrounds.len();
    if spec.background.is_some() != background || n < min_fg || n > max_fg {
        return Err(ComposeError::InvalidEdit(format!(
            "{subtype} does not apply to a scene with {} background and {n} foregrounds",
            if spec.background.is_some() { "a" } else { "no" }
        )));
    }
    Ok(())
}

/// Applies `op` to `spec`. Placements the op does not target are carried
/// over unchanged; the result is re-validated against `library`.
pub fn apply_edit(
    spec: &SoundscapeSpec,
    op: &EditOp,
    library: &SegmentLibrary,
) -> Result<(SoundscapeSpec, EditMetadata), ComposeError> {
    let mut out = spec.clone();
    let task = op.task();
    let meta = |subtype: Subtype, event: String| EditMetadata {
        task,
        subtype,
        event,
        event2: None,
        onset_s: None,
        snr_db: None,
        delta_db: None,
        direction: None,
        alpha: None,
        order: None,
    };
    let any = usize::MAX;

    let metadata = match op {
        EditOp::Add { subtype, placement } => {
            let mut m = meta(*subtype, label(library, &placement.segment_id)?);
            match subtype {
                Subtype::AddForegroundToBackground | Subtype::AddSecondForeground => {
                    if *subtype == Subtype::AddForegroundToBackground {
                        require_form(spec, *subtype, true, 0, 0)?;
                    } else {
                        require_form(spec, *subtype, true, 1, any)?;
                    }
                    if placement.role != Role::Foreground {
                        return Err(ComposeError::InvalidEdit(format!("{subtype} adds a foreground")));
                    }
                    m.onset_s = Some(placement.onset_s);
                    m.snr_db = Some(placement.level_db);
                    out.foregrounds.push(placement.clone());
                }
                Subtype::AddBackgroundToForeground => {
                    require_form(spec, *subtype, false, 1, any)?;
                    if placement.role != Role::Background {
                        return Err(ComposeError::InvalidEdit(format!("{subtype} adds a background")));
                    }
                    out.background = Some(placement.clone());
                }
                other => return Err(ComposeError::InvalidEdit(format!("{other} is not an add"))),
            }
            m
        }
        EditOp::Remove { subtype, target } => {
            let slot = resolve(spec, target)?;
            match (subtype, slot) {
                (Subtype::RemoveOnlyForeground, Slot::Foreground(i)) => {
                    require_form(spec, *subtype, true, 1, 1)?;
                    let p = out.foregrounds.remove(i);
                    let mut m = meta(*subtype, label(library, &p.segment_id)?);
                    m.onset_s = Some(p.onset_s);
                    m
                }
                (Subtype::RemoveOneOfForegrounds, Slot::Foreground(i)) => {
                    require_form(spec, *subtype, true, 2, any)?;
                    let p = out.foregrounds.remove(i);
                    let mut m = meta(*subtype, label(library, &p.segment_id)?);
                    m.onset_s = Some(p.onset_s);
                    m
                }
                (Subtype::RemoveBackground, Slot::Background) => {
                    require_form(spec, *subtype, true, 1, any)?;
                    let p = out.background.take().expect("resolved");
                    meta(*subtype, label(library, &p.segment_id)?)
                }
                (st, _) if st.task() == Task::Remove => {
                    return Err(ComposeError::Selector(format!("target does not fit {st}")))
                }
                (st, _) => return Err(ComposeError::InvalidEdit(format!("{st} is not a removal"))),
            }
        }
        EditOp::Replace {
            subtype,
            target,
            new_segment_id,
        } => {
            let slot = resolve(spec, target)?;
            let placement = match (subtype, slot) {
                (Subtype::SwapForeground, Slot::Foreground(i)) => &mut out.foregrounds[i],
                (Subtype::SwapBackground, Slot::Background) => {
                    out.background.as_mut().expect("resolved")
                }
                (st, _) => {
                    return Err(ComposeError::InvalidEdit(format!(
                        "{st} cannot replace the selected placement"
                    )))
                }
            };
            if &placement.segment_id == new_segment_id {
                return Err(ComposeError::InvalidEdit("replacement is the same segment".into()));
            }
            let mut m = meta(*subtype, label(library, &placement.segment_id)?);
            m.event2 = Some(label(library, new_segment_id)?);
            if placement.role == Role::Foreground {
                m.onset_s = Some(placement.onset_s);
            }
            placement.segment_id = new_segment_id.clone();
            m
        }
        EditOp::Reorder { first, second } => {
            let (i, j) = (foreground(spec, first)?, foreground(spec, second)?);
            if i == j {
                return Err(ComposeError::Selector("reorder needs two distinct foregrounds".into()));
            }
            let subtype = if spec.background.is_some() {
                Subtype::ReorderForegroundsOverBackground
            } else {
                Subtype::ReorderForegrounds
            };
            let (a, b) = (out.foregrounds[i].onset_s, out.foregrounds[j].onset_s);
            out.foregrounds[i].onset_s = b;
            out.foregrounds[j].onset_s = a;
            let mut m = meta(subtype, label(library, &spec.foregrounds[i].segment_id)?);
            m.event2 = Some(label(library, &spec.foregrounds[j].segment_id)?);
            m.onset_s = Some(a);
            m.order = Some([i, j]);
            m
        }
        EditOp::Loudness {
            target,
            delta_db,
            direction,
        } => {
            if !(*delta_db > 0.0 && delta_db.is_finite()) {
                return Err(ComposeError::InvalidEdit(format!("loudness delta {delta_db} must be positive")));
            }
            let i = foreground(spec, target)?;
            let subtype = match direction {
                Direction::Up => Subtype::LouderForeground,
                Direction::Down => Subtype::QuieterForeground,
            };
            out.foregrounds[i].gain_offset_db += direction.sign() * delta_db;
            let mut m = meta(subtype, label(library, &spec.foregrounds[i].segment_id)?);
            m.onset_s = Some(spec.foregrounds[i].onset_s);
            m.delta_db = Some(*delta_db);
            m.direction = Some(*direction);
            m
        }
        EditOp::Speed { target, alpha } => {
            if !(SPEED_EDIT_MIN..=SPEED_EDIT_MAX).contains(alpha)
                || (alpha - 1.0).abs() < SPEED_EDIT_MIN_CHANGE - 1e-9
            {
                return Err(ComposeError::InvalidEdit(format!(
                    "speed factor {alpha} must lie in [{SPEED_EDIT_MIN}, {SPEED_EDIT_MAX}] at least {SPEED_EDIT_MIN_CHANGE} away from 1"
                )));
            }
            let i = foreground(spec, target)?;
            out.foregrounds[i].speed_factor = *alpha;
            let mut m = meta(Subtype::SpeedForeground, label(library, &spec.foregrounds[i].segment_id)?);
            m.onset_s = Some(spec.foregrounds[i].onset_s);
            m.alpha = Some(*alpha);
            m
        }
    };
    out.validate(library)?;
    Ok((out, metadata))
}
