use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{parse_template, Pattern, SlotValues, TemplateError};
use crate::task::{Subtype, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub id: String,
    pub task: Task,
    /// `None` applies to every subtype of the task.
    pub subtype: Option<Subtype>,
    pub pattern: Pattern,
}

/// On-disk form of one bank entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtype: Option<Subtype>,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub template_id: String,
    pub slots: SlotValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank {
    templates: Vec<Template>,
}

impl TemplateBank {
    pub fn from_entries(entries: Vec<TemplateEntry>) -> Result<Self, TemplateError> {
        let mut seen = BTreeSet::new();
        let mut templates = Vec::with_capacity(entries.len());
        for (i, entry) in entries.into_iter().enumerate() {
            if let Some(st) = entry.subtype {
                if st.task() != entry.task {
                    return Err(TemplateError::SubtypeMismatch {
                        task: entry.task,
                        subtype: st,
                    });
                }
            }
            let id = entry
                .id
                .unwrap_or_else(|| format!("{}.{i:03}", entry.task));
            if !seen.insert(id.clone()) {
                return Err(TemplateError::DuplicateId(id));
            }
            templates.push(Template {
                id,
                task: entry.task,
                subtype: entry.subtype,
                pattern: parse_template(&entry.pattern)?,
            });
        }
        Ok(Self { templates })
    }

    /// Loads a JSON array of `{task, subtype?, pattern, id?}` objects.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, TemplateError> {
        let entries: Vec<TemplateEntry> = serde_json::from_str(text)?;
        Self::from_entries(entries)
    }

    pub fn entries(&self) -> Vec<TemplateEntry> {
        self.templates
            .iter()
            .map(|t| TemplateEntry {
                id: Some(t.id.clone()),
                task: t.task,
                subtype: t.subtype,
                pattern: t.pattern.source().to_string(),
            })
            .collect()
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn get(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }

    /// Templates for `(task, subtype)` whose slots are all present in `slots`.
    pub fn candidates<'a>(
        &'a self,
        task: Task,
        subtype: Subtype,
        slots: &'a SlotValues,
    ) -> impl Iterator<Item = &'a Template> + 'a {
        self.templates.iter().filter(move |t| {
            t.task == task
                && t.subtype.is_none_or(|s| s == subtype)
                && t.pattern.required_slots().iter().all(|s| slots.contains(*s))
        })
    }

    /// Picks a template uniformly among the candidates and fills it.
    pub fn synthesize<R: Rng + ?Sized>(
        &self,
        task: Task,
        subtype: Subtype,
        slots: SlotValues,
        rng: &mut R,
    ) -> Result<Instruction, TemplateError> {
        let pool: Vec<&Template> = self.candidates(task, subtype, &slots).collect();
        if pool.is_empty() {
            return Err(TemplateError::EmptyBank { task, subtype });
        }
        let template = pool[rng.gen_range(0..pool.len())];
        Ok(Instruction {
            text: template.pattern.fill(&slots)?,
            template_id: template.id.clone(),
            slots,
        })
    }

    /// Re-renders a stored instruction from its template id and slot values.
    pub fn refill(&self, template_id: &str, slots: &SlotValues) -> Result<String, TemplateError> {
        self.get(template_id)
            .ok_or_else(|| TemplateError::UnknownTemplate(template_id.to_string()))?
            .pattern
            .fill(slots)
    }

    pub fn default_bank() -> Self {
        Self::from_entries(default_entries()).expect("built-in templates are valid")
    }
}

impl Default for TemplateBank {
    fn default() -> Self {
        Self::default_bank()
    }
}

fn default_entries() -> Vec<TemplateEntry> {
    use Subtype::*;
    let mut out = Vec::new();
    let mut push = |id: String, task: Task, subtype: Option<Subtype>, pattern: &str| {
        out.push(TemplateEntry {
            id: Some(id),
            task,
            subtype,
            pattern: pattern.to_string(),
        })
    };

    let add_foreground = [
        "Add a {event} at {onset_s} seconds",
        "Insert the sound of {event} starting at {onset_s} s",
        "Add {event} around the {onset_s} second mark",
        "Put a {event} sound into the clip at {onset_s} seconds",
        "Mix in {event} beginning at {onset_s} seconds",
    ];
    for st in [AddForegroundToBackground, AddSecondForeground] {
        for (i, p) in add_foreground.iter().enumerate() {
            push(format!("add.{}.{i}", short(st)), Task::Add, Some(st), p);
        }
    }
    for (i, p) in [
        "Add {event} in the background",
        "Place the sound of {event} behind the existing sounds",
        "Add a background of {event}",
        "Mix {event} into the background",
        "Fill the background with {event}",
    ]
    .iter()
    .enumerate()
    {
        push(format!("add.f.{i}"), Task::Add, Some(AddBackgroundToForeground), p);
    }

    let remove_foreground = [
        "Remove the {event}",
        "Delete the {event} sound at {onset_s} seconds",
        "Take out the {event} that starts at {onset_s} s",
        "Get rid of the {event}",
        "Erase the sound of {event}",
    ];
    for st in [RemoveOnlyForeground, RemoveOneOfForegrounds] {
        for (i, p) in remove_foreground.iter().enumerate() {
            push(format!("remove.{}.{i}", short(st)), Task::Remove, Some(st), p);
        }
    }
    for (i, p) in [
        "Remove the background {event}",
        "Remove the {event} in the background",
        "Keep only the foreground and drop the {event}",
        "Delete the background sound of {event}",
        "Get rid of the {event} behind the other sounds",
    ]
    .iter()
    .enumerate()
    {
        push(format!("remove.f.{i}"), Task::Remove, Some(RemoveBackground), p);
    }

    for (i, p) in [
        "Replace the {event} with {event2}",
        "Swap the {event} for a {event2}",
        "Change the {event} at {onset_s} seconds into {event2}",
        "Substitute {event2} for the {event}",
        "Turn the {event} sound into {event2}",
    ]
    .iter()
    .enumerate()
    {
        push(format!("replace.fg.{i}"), Task::Replace, Some(SwapForeground), p);
    }
    for (i, p) in [
        "Replace the background {event} with {event2}",
        "Change the background from {event} to {event2}",
        "Swap the {event} in the background for {event2}",
        "Substitute {event2} for the background {event}",
        "Make the background {event2} instead of {event}",
    ]
    .iter()
    .enumerate()
    {
        push(format!("replace.bg.{i}"), Task::Replace, Some(SwapBackground), p);
    }

    for (i, p) in [
        "Swap the order of the {event} and the {event2}",
        "Play the {event2} before the {event}",
        "Reverse the order of {event} and {event2}",
        "Let the {event2} come first, then the {event}",
        "Switch the positions of the {event} and the {event2}",
    ]
    .iter()
    .enumerate()
    {
        push(format!("reorder.{i}"), Task::Reorder, None, p);
    }

    for (i, p) in [
        "Make the {event} {direction} by {delta_db} dB",
        "Make the {event} {direction}",
        "Adjust the {event} to be {delta_db} dB {direction}",
        "Make the {event} at {onset_s} seconds {direction}",
        "Change the volume of the {event} so it is {delta_db} dB {direction}",
    ]
    .iter()
    .enumerate()
    {
        push(format!("loudness.{i}"), Task::Loudness, None, p);
    }
    push("loudness.up.0".into(), Task::Loudness, Some(LouderForeground), "Turn up the {event} by {delta_db} dB");
    push("loudness.down.0".into(), Task::Loudness, Some(QuieterForeground), "Turn down the {event} by {delta_db} dB");

    for (i, p) in [
        "Make the {event} {speed_word}",
        "Play the {event} at {alpha}x speed",
        "Change the speed of the {event} by a factor of {alpha}",
        "Make the {event} at {onset_s} seconds play {speed_word}",
        "Play the {event} {speed_word}, at {alpha}x speed",
    ]
    .iter()
    .enumerate()
    {
        push(format!("speed.{i}"), Task::Speed, None, p);
    }
    out
}

fn short(st: Subtype) -> &'static str {
    match st {
        Subtype::AddForegroundToBackground => "b",
        Subtype::AddSecondForeground => "fb",
        Subtype::RemoveOnlyForeground => "fb",
        Subtype::RemoveOneOfForegrounds => "ffb",
        _ => "x",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruct::{LoudnessWord, SlotName, SlotValue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn full_slots() -> SlotValues {
        SlotValues::new()
            .with(SlotName::Event, SlotValue::Text("siren".into()))
            .with(SlotName::Event2, SlotValue::Text("bell".into()))
            .with(SlotName::OnsetS, SlotValue::Real(3.0))
            .with(SlotName::DeltaDb, SlotValue::Real(6.0))
            .with(SlotName::Direction, SlotValue::Direction(LoudnessWord::Louder))
            .with(SlotName::Alpha, SlotValue::Real(1.5))
            .with(SlotName::SpeedWord, SlotValue::Speed(crate::instruct::SpeedWord::Faster))
    }

    #[test]
    fn default_bank_covers_every_subtype() {
        let bank = TemplateBank::default_bank();
        let slots = full_slots();
        for task in Task::ALL {
            let per_task = bank.templates().iter().filter(|t| t.task == task).count();
            assert!(per_task >= 5, "{task}: {per_task}");
            for &st in task.subtypes() {
                assert!(bank.candidates(task, st, &slots).count() >= 5, "{st}");
            }
        }
        // count is reserved for repetition adds, which the default bank does not emit
        assert!(bank
            .templates()
            .iter()
            .all(|t| !t.pattern.required_slots().contains(&SlotName::Count)));
    }

    #[test]
    fn single_template_bank_always_chosen() {
        let bank = TemplateBank::from_json_str(
            r#"[{"task":"remove","pattern":"Remove the {event}"}]"#,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let ins = bank
                .synthesize(Task::Remove, Subtype::RemoveOnlyForeground, full_slots(), &mut rng)
                .unwrap();
            assert_eq!(ins.text, "Remove the siren");
            assert_eq!(ins.template_id, "remove.000");
        }
    }

    #[test]
    fn fixed_seed_fixed_choice() {
        let bank = TemplateBank::default_bank();
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            bank.synthesize(Task::Reorder, Subtype::ReorderForegrounds, full_slots(), &mut rng)
                .unwrap()
        };
        assert_eq!(pick(9), pick(9));
    }

    #[test]
    fn loudness_example() {
        let bank = TemplateBank::from_json_str(
            r#"[{"id":"l","task":"loudness","pattern":"Make the {event} {direction} by {delta_db} dB"}]"#,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ins = bank
            .synthesize(Task::Loudness, Subtype::LouderForeground, full_slots(), &mut rng)
            .unwrap();
        assert_eq!(ins.text, "Make the siren louder by 6.0 dB");
        assert_eq!(bank.refill(&ins.template_id, &ins.slots).unwrap(), ins.text);
    }

    #[test]
    fn bank_errors() {
        let bank = TemplateBank::from_json_str(r#"[{"task":"add","pattern":"Add {event}"}]"#).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            bank.synthesize(Task::Speed, Subtype::SpeedForeground, full_slots(), &mut rng),
            Err(TemplateError::EmptyBank { .. })
        ));
        assert!(matches!(
            TemplateBank::from_json_str(r#"[{"task":"add","subtype":"F+B->B","pattern":"x"}]"#),
            Err(TemplateError::SubtypeMismatch { .. })
        ));
        assert!(matches!(
            TemplateBank::from_json_str(
                r#"[{"id":"a","task":"add","pattern":"x"},{"id":"a","task":"add","pattern":"y"}]"#
            ),
            Err(TemplateError::DuplicateId(_))
        ));
    }

    #[test]
    fn entries_round_trip() {
        let bank = TemplateBank::default_bank();
        let json = serde_json::to_string(&bank.entries()).unwrap();
        assert_eq!(TemplateBank::from_json_str(&json).unwrap(), bank);
    }
}
