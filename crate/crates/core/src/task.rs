//! The six editing tasks and their source→edited scene forms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Add,
    Remove,
    Replace,
    Reorder,
    Loudness,
    Speed,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Add,
        Task::Remove,
        Task::Replace,
        Task::Reorder,
        Task::Loudness,
        Task::Speed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Add => "add",
            Task::Remove => "remove",
            Task::Replace => "replace",
            Task::Reorder => "reorder",
            Task::Loudness => "loudness",
            Task::Speed => "speed",
        }
    }

    pub fn subtypes(self) -> &'static [Subtype] {
        use Subtype::*;
        match self {
            Task::Add => &[AddForegroundToBackground, AddBackgroundToForeground, AddSecondForeground],
            Task::Remove => &[RemoveOnlyForeground, RemoveBackground, RemoveOneOfForegrounds],
            Task::Replace => &[SwapForeground, SwapBackground],
            Task::Reorder => &[ReorderForegrounds, ReorderForegroundsOverBackground],
            Task::Loudness => &[LouderForeground, QuieterForeground],
            Task::Speed => &[SpeedForeground],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown task '{s}'"))
    }
}

/// Scene-form variants. The serialized names use F for a foreground event,
/// B for the background and primes for a second, distinct event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subtype {
    #[serde(rename = "B->F+B")]
    AddForegroundToBackground,
    #[serde(rename = "F->F+B")]
    AddBackgroundToForeground,
    #[serde(rename = "F+B->F+F'+B")]
    AddSecondForeground,
    #[serde(rename = "F+B->B")]
    RemoveOnlyForeground,
    #[serde(rename = "F+B->F")]
    RemoveBackground,
    #[serde(rename = "F+F'+B->F+B")]
    RemoveOneOfForegrounds,
    #[serde(rename = "F+B->F'+B")]
    SwapForeground,
    #[serde(rename = "F+B->F+B'")]
    SwapBackground,
    #[serde(rename = "F1+F2->F2+F1")]
    ReorderForegrounds,
    #[serde(rename = "F1+F2+B->F2+F1+B")]
    ReorderForegroundsOverBackground,
    #[serde(rename = "F+B->F_up+B")]
    LouderForeground,
    #[serde(rename = "F+B->F_down+B")]
    QuieterForeground,
    #[serde(rename = "F+B->Fxa+B")]
    SpeedForeground,
}

impl Subtype {
    pub fn task(self) -> Task {
        use Subtype::*;
        match self {
            AddForegroundToBackground | AddBackgroundToForeground | AddSecondForeground => Task::Add,
            RemoveOnlyForeground | RemoveBackground | RemoveOneOfForegrounds => Task::Remove,
            SwapForeground | SwapBackground => Task::Replace,
            ReorderForegrounds | ReorderForegroundsOverBackground => Task::Reorder,
            LouderForeground | QuieterForeground => Task::Loudness,
            SpeedForeground => Task::Speed,
        }
    }

    pub fn notation(self) -> &'static str {
        use Subtype::*;
        match self {
            AddForegroundToBackground => "B->F+B",
            AddBackgroundToForeground => "F->F+B",
            AddSecondForeground => "F+B->F+F'+B",
            RemoveOnlyForeground => "F+B->B",
            RemoveBackground => "F+B->F",
            RemoveOneOfForegrounds => "F+F'+B->F+B",
            SwapForeground => "F+B->F'+B",
            SwapBackground => "F+B->F+B'",
            ReorderForegrounds => "F1+F2->F2+F1",
            ReorderForegroundsOverBackground => "F1+F2+B->F2+F1+B",
            LouderForeground => "F+B->F_up+B",
            QuieterForeground => "F+B->F_down+B",
            SpeedForeground => "F+B->Fxa+B",
        }
    }
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.notation())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtypes_belong_to_their_task() {
        for task in Task::ALL {
            for st in task.subtypes() {
                assert_eq!(st.task(), task);
                let json = serde_json::to_string(st).unwrap();
                assert_eq!(json, format!("\"{}\"", st.notation()));
                assert_eq!(serde_json::from_str::<Subtype>(&json).unwrap(), *st);
            }
            assert_eq!(task.name().parse::<Task>().unwrap(), task);
        }
    }
}
