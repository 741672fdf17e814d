use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::TemplateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotName {
    Event,
    Event2,
    OnsetS,
    Count,
    DeltaDb,
    Direction,
    Alpha,
    SpeedWord,
}

impl SlotName {
    pub const ALL: [SlotName; 8] = [
        SlotName::Event,
        SlotName::Event2,
        SlotName::OnsetS,
        SlotName::Count,
        SlotName::DeltaDb,
        SlotName::Direction,
        SlotName::Alpha,
        SlotName::SpeedWord,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SlotName::Event => "event",
            SlotName::Event2 => "event2",
            SlotName::OnsetS => "onset_s",
            SlotName::Count => "count",
            SlotName::DeltaDb => "delta_db",
            SlotName::Direction => "direction",
            SlotName::Alpha => "alpha",
            SlotName::SpeedWord => "speed_word",
        }
    }

    fn expected(self) -> &'static str {
        match self {
            SlotName::Event | SlotName::Event2 => "text",
            SlotName::OnsetS | SlotName::DeltaDb | SlotName::Alpha => "real",
            SlotName::Count => "integer",
            SlotName::Direction => "louder|quieter",
            SlotName::SpeedWord => "faster|slower",
        }
    }
}

impl fmt::Display for SlotName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SlotName {
    type Err = TemplateError;
    fn from_str(s: &str) -> Result<Self, TemplateError> {
        SlotName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| TemplateError::UnknownSlot(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoudnessWord {
    Louder,
    Quieter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedWord {
    Faster,
    Slower,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SlotValue {
    Text(String),
    Real(f64),
    Int(i64),
    Direction(LoudnessWord),
    Speed(SpeedWord),
}

impl SlotValue {
    fn type_name(&self) -> &'static str {
        match self {
            SlotValue::Text(_) => "text",
            SlotValue::Real(_) => "real",
            SlotValue::Int(_) => "integer",
            SlotValue::Direction(_) => "louder|quieter",
            SlotValue::Speed(_) => "faster|slower",
        }
    }

    /// Renders the value with the fixed per-slot number formatting:
    /// one decimal for seconds and decibels, two for speed factors.
    pub(crate) fn render(&self, slot: SlotName) -> Result<String, TemplateError> {
        let mismatch = || TemplateError::TypeMismatch {
            slot,
            expected: slot.expected(),
            found: self.type_name(),
        };
        Ok(match (slot, self) {
            (SlotName::Event | SlotName::Event2, SlotValue::Text(t)) => t.clone(),
            (SlotName::OnsetS | SlotName::DeltaDb, SlotValue::Real(x)) if x.is_finite() => {
                format!("{x:.1}")
            }
            (SlotName::Alpha, SlotValue::Real(x)) if x.is_finite() => format!("{x:.2}"),
            (SlotName::Count, SlotValue::Int(n)) => n.to_string(),
            (SlotName::Direction, SlotValue::Direction(d)) => match d {
                LoudnessWord::Louder => "louder".into(),
                LoudnessWord::Quieter => "quieter".into(),
            },
            (SlotName::SpeedWord, SlotValue::Speed(s)) => match s {
                SpeedWord::Faster => "faster".into(),
                SpeedWord::Slower => "slower".into(),
            },
            _ => return Err(mismatch()),
        })
    }

    fn to_json(&self) -> Value {
        match self {
            SlotValue::Text(t) => Value::String(t.clone()),
            SlotValue::Real(x) => serde_json::json!(x),
            SlotValue::Int(n) => serde_json::json!(n),
            SlotValue::Direction(d) => serde_json::to_value(d).expect("enum serializes"),
            SlotValue::Speed(s) => serde_json::to_value(s).expect("enum serializes"),
        }
    }

    fn from_json(slot: SlotName, v: &Value) -> Result<Self, TemplateError> {
        let mismatch = || TemplateError::TypeMismatch {
            slot,
            expected: slot.expected(),
            found: "json value",
        };
        match slot {
            SlotName::Event | SlotName::Event2 => {
                v.as_str().map(|s| SlotValue::Text(s.into())).ok_or_else(mismatch)
            }
            SlotName::OnsetS | SlotName::DeltaDb | SlotName::Alpha => {
                v.as_f64().map(SlotValue::Real).ok_or_else(mismatch)
            }
            SlotName::Count => v.as_i64().map(SlotValue::Int).ok_or_else(mismatch),
            SlotName::Direction => serde_json::from_value(v.clone())
                .map(SlotValue::Direction)
                .map_err(|_| mismatch()),
            SlotName::SpeedWord => serde_json::from_value(v.clone())
                .map(SlotValue::Speed)
                .map_err(|_| mismatch()),
        }
    }
}

/// Typed slot assignments. Serialized as a JSON object keyed by slot name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(
    into = "BTreeMap<String, Value>",
    try_from = "BTreeMap<String, Value>"
)]
pub struct SlotValues(BTreeMap<SlotName, SlotValue>);

impl SlotValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, slot: SlotName, value: SlotValue) -> Self {
        self.0.insert(slot, value);
        self
    }

    pub fn insert(&mut self, slot: SlotName, value: SlotValue) {
        self.0.insert(slot, value);
    }

    pub fn get(&self, slot: SlotName) -> Option<&SlotValue> {
        self.0.get(&slot)
    }

    pub fn contains(&self, slot: SlotName) -> bool {
        self.0.contains_key(&slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SlotName, &SlotValue)> {
        self.0.iter().map(|(k, v)| (*k, v))
    }

    pub fn text(&self, slot: SlotName) -> Option<&str> {
        match self.0.get(&slot) {
            Some(SlotValue::Text(t)) => Some(t),
            _ => None,
        }
    }

    pub fn real(&self, slot: SlotName) -> Option<f64> {
        match self.0.get(&slot) {
            Some(SlotValue::Real(x)) => Some(*x),
            _ => None,
        }
    }
}

impl From<SlotValues> for BTreeMap<String, Value> {
    fn from(v: SlotValues) -> Self {
        v.0.iter()
            .map(|(k, v)| (k.as_str().to_string(), v.to_json()))
            .collect()
    }
}

impl TryFrom<BTreeMap<String, Value>> for SlotValues {
    type Error = TemplateError;
    fn try_from(map: BTreeMap<String, Value>) -> Result<Self, TemplateError> {
        map.iter()
            .map(|(k, v)| {
                let slot: SlotName = k.parse()?;
                Ok((slot, SlotValue::from_json(slot, v)?))
            })
            .collect::<Result<_, _>>()
            .map(SlotValues)
    }
}
